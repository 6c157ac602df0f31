"""Small shared setup for the demo scripts: one toy task and a trained, aligned pair."""

from dataclasses import replace

from modecomb import apply_permutation, weight_match
from modecomb.training import DatasetSpec, TrainConfig, default_arch, make_dataset, train_model

DATA_SPEC = DatasetSpec(seed=0, test_size=2000)
CFG = TrainConfig(seed=0, epochs=20)


def toy_data():
    return make_dataset(DATA_SPEC)


def trained_pair(data, width_multiplier=4, seeds=(1, 2)):
    """Models A and B trained from different seeds, plus B after weight matching to A."""
    arch = default_arch(DATA_SPEC, width_multiplier)
    a, b = (train_model(arch, data, replace(CFG, seed=s)) for s in seeds)
    res = weight_match(a, b)
    return a, b, apply_permutation(b, res.pi), res
