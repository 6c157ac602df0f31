import numpy as np
import pytest

from modecomb.nets import Architecture, ModelWeights, PermutationSet, unflatten
from modecomb.training import DatasetSpec, TrainConfig, CosineWarmup, make_dataset, train_model, default_arch


def random_model(arch, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    return unflatten(scale * rng.standard_normal(arch.num_params), arch)


def random_perms(arch, seed):
    rng = np.random.default_rng(seed)
    return PermutationSet(tuple(rng.permutation(arch.hidden_width) for _ in range(arch.num_hidden)))


@pytest.fixture(scope="session")
def small_data():
    return make_dataset(DatasetSpec(seed=3, train_size=600, test_size=400, input_dim=8, num_classes=4))


@pytest.fixture(scope="session")
def small_pair(small_data):
    """Two independently trained narrow models on a small task."""
    arch = default_arch(small_data.spec, width_multiplier=1)
    cfg = TrainConfig(seed=0, epochs=8, schedule=CosineWarmup(0.1, 1.0))
    a = train_model(arch, small_data, TrainConfig(seed=11, epochs=8, schedule=cfg.schedule))
    b = train_model(arch, small_data, TrainConfig(seed=12, epochs=8, schedule=cfg.schedule))
    return a, b


# acceptance criteria record one line each here; printed after the run
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
