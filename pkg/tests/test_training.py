import math

import numpy as np
import pytest

from modecomb.errors import DivergenceError, ValidationError
from modecomb.evaluation import evaluate
from modecomb.nets import Architecture, flatten, unflatten
from modecomb.training import (CosineWarmup, DatasetSpec, StepThirds, TrainConfig, _loss_and_grads,
                               default_arch, init_params, lr_at, make_dataset, train, train_model)


def test_dataset_is_deterministic():
    spec = DatasetSpec(seed=5, train_size=300, test_size=200)
    a, b = make_dataset(spec), make_dataset(spec)
    assert a.train.inputs.tobytes() == b.train.inputs.tobytes()
    assert a.test.labels.tobytes() == b.test.labels.tobytes()
    assert not np.array_equal(make_dataset(DatasetSpec(seed=6, train_size=300, test_size=200)).train.inputs,
                              a.train.inputs)


def test_labels_are_balanced():
    data = make_dataset(DatasetSpec(seed=1, train_size=1003, test_size=57, num_classes=10))
    for split in (data.train, data.test):
        counts = np.bincount(split.labels, minlength=10)
        assert counts.max() - counts.min() <= 1


def test_centers_have_requested_norm():
    data = make_dataset(DatasetSpec(seed=2, class_separation=2.5))
    np.testing.assert_allclose(np.linalg.norm(data.centers, axis=1), 2.5, rtol=1e-6)


def test_noise_free_points_sit_on_centers():
    data = make_dataset(DatasetSpec(seed=3, noise_sigma=0.0, train_size=100, test_size=100))
    split = data.test
    assert np.array_equal(split.inputs, data.centers[split.labels])
    dist = ((split.inputs[:, None, :] - data.centers[None]) ** 2).sum(-1)
    assert (dist.argmin(1) == split.labels).mean() == 1.0


def test_no_separation_gives_chance_accuracy():
    spec = DatasetSpec(seed=4, class_separation=0.0, train_size=1000, test_size=4000)
    data = make_dataset(spec)
    theta = train_model(default_arch(spec), data, TrainConfig(seed=1, epochs=5))
    # chance is 0.1; four standard errors at n = 4000 is about 0.019
    assert abs(evaluate(theta, data).accuracy - 0.1) < 0.03


def test_dataset_rejects_bad_sizes():
    with pytest.raises(ValidationError):
        DatasetSpec(seed=0, train_size=0)
    with pytest.raises(ValidationError):
        DatasetSpec(seed=0, test_size=5, num_classes=10)


def test_init_is_seeded_and_bounded():
    arch = Architecture(32, 10, width_multiplier=2)
    a, b, c = init_params(arch, 1), init_params(arch, 1), init_params(arch, 2)
    assert a.equals(b)
    # gains and offsets are constant by design, so compare the random entries
    plain = Architecture(32, 10, width_multiplier=2, layernorm=False)
    assert (flatten(init_params(plain, 1)) != flatten(init_params(plain, 2))).mean() > 0.99
    assert not a.equals(c)
    for (out, inp), w, bias in zip(arch.layer_shapes(), a.weights, a.biases):
        bound = np.float32(math.sqrt(1.0 / inp))
        assert np.abs(w).max() <= bound and np.abs(bias).max() <= bound
    assert all(np.all(g == 1.0) for g in a.gains)
    assert all(np.all(o == 0.0) for o in a.offsets)


def test_step_schedule():
    s = StepThirds(0.01)
    assert lr_at(s, 0, 0, 20, 60) == 0.01
    assert lr_at(s, 30, 0, 20, 60) == pytest.approx(0.001)
    assert lr_at(s, 19, 19, 20, 60) == 0.01
    assert lr_at(s, 20, 0, 20, 60) == pytest.approx(0.001)
    assert lr_at(s, 40, 0, 20, 60) == pytest.approx(0.0001)
    assert lr_at(s, 59, 19, 20, 60) == pytest.approx(0.0001)


def test_cosine_schedule():
    s = CosineWarmup(0.1, 1.0)
    assert lr_at(s, 0, 0, 20, 50) == 1e-6
    assert lr_at(s, 0, 10, 20, 50) == pytest.approx(1e-6 + (0.1 - 1e-6) / 2)
    assert lr_at(s, 1, 0, 20, 50) == pytest.approx(0.1)
    assert lr_at(s, 49, 19, 20, 50) <= 1e-6 * 0.1
    lrs = [lr_at(s, e, k, 20, 50) for e in range(1, 50) for k in range(20)]
    assert all(x >= y for x, y in zip(lrs, lrs[1:]))


def test_schedule_rejects_out_of_range_step():
    with pytest.raises(ValidationError):
        lr_at(StepThirds(), 5, 0, 10, 5)


def test_config_validation():
    with pytest.raises(ValidationError):
        TrainConfig(seed=0, momentum=1.0)
    with pytest.raises(ValidationError):
        StepThirds(0.0)
    with pytest.raises(ValidationError):
        CosineWarmup(-1.0)


@pytest.mark.parametrize("layernorm", [False, True])
def test_gradients_match_finite_differences(layernorm):
    arch = Architecture(5, 3, depth=3, base_width=4, layernorm=layernorm)
    rng = np.random.default_rng(0)
    theta = unflatten(rng.standard_normal(arch.num_params) * 0.5, arch)
    x = rng.standard_normal((7, 5))
    y = rng.integers(0, 3, 7)

    def params_of(vec):
        m = unflatten(vec, arch)
        return tuple([a.astype(np.float64) for a in group]
                     for group in (m.weights, m.biases, m.gains, m.offsets))

    base = flatten(theta).astype(np.float64)
    _, grads = _loss_and_grads(params_of(base), arch, x, y)
    names = [n for n, _, _ in arch.param_layout()]
    pieces, g_w, g_b, g_g, g_o = {}, *grads
    for ell in range(arch.depth):
        pieces[f"layer{ell + 1}.weight"] = g_w[ell]
        pieces[f"layer{ell + 1}.bias"] = g_b[ell]
        if layernorm and ell < arch.depth - 1:
            pieces[f"layer{ell + 1}.gain"] = g_g[ell]
            pieces[f"layer{ell + 1}.offset"] = g_o[ell]
    analytic = np.concatenate([pieces[n].ravel() for n in names])

    # central differences in float64 by bypassing the float32 container
    def loss_at(vec):
        shapes = [s for _, _, s in arch.param_layout()]
        arrays, i = [], 0
        for s in shapes:
            k = int(np.prod(s))
            arrays.append(vec[i:i + k].reshape(s))
            i += k
        lookup = dict(zip(names, arrays))
        ws = [lookup[f"layer{e}.weight"] for e in range(1, arch.depth + 1)]
        bs = [lookup[f"layer{e}.bias"] for e in range(1, arch.depth + 1)]
        gs = [lookup[f"layer{e}.gain"] for e in range(1, arch.depth)] if layernorm else []
        os_ = [lookup[f"layer{e}.offset"] for e in range(1, arch.depth)] if layernorm else []
        return _loss_and_grads((ws, bs, gs, os_), arch, x, y)[0]

    numeric = np.empty_like(base)
    h = 1e-6
    for i in range(base.size):
        up, down = base.copy(), base.copy()
        up[i] += h
        down[i] -= h
        numeric[i] = (loss_at(up) - loss_at(down)) / (2 * h)
    np.testing.assert_allclose(analytic, numeric, atol=1e-6, rtol=1e-4)


def test_zero_epochs_returns_init(small_data):
    arch = default_arch(small_data.spec)
    init = init_params(arch, 3)
    assert train(init, small_data, TrainConfig(seed=3, epochs=0)) is init


def test_training_is_deterministic(small_data):
    arch = default_arch(small_data.spec)
    cfg = TrainConfig(seed=9, epochs=2)
    assert train_model(arch, small_data, cfg).equals(train_model(arch, small_data, cfg))


def test_separable_task_is_learned():
    spec = DatasetSpec(seed=7, class_separation=8.0, noise_sigma=0.5, train_size=1000, test_size=500)
    data = make_dataset(spec)
    theta = train_model(default_arch(spec), data, TrainConfig(seed=1, epochs=20))
    # linear probe oracle: nearest centroid is essentially perfect at this separation
    dist = ((data.train.inputs[:, None, :] - data.centers[None]) ** 2).sum(-1)
    assert (dist.argmin(1) == data.train.labels).mean() >= 0.99
    assert evaluate(theta, data, "train").accuracy >= 0.99


def test_late_training_loss_does_not_rise():
    spec = DatasetSpec(seed=0)
    data = make_dataset(spec)
    losses = []
    cfg = TrainConfig(seed=1, epochs=30, schedule=CosineWarmup(0.1, 1.0))
    train(init_params(default_arch(spec), 1), data, cfg, on_epoch=lambda e, l: losses.append(l))
    tail = losses[20:]
    assert all(b <= a + 0.01 for a, b in zip(tail, tail[1:]))


def test_divergence_is_reported(small_data):
    arch = default_arch(small_data.spec)
    cfg = TrainConfig(seed=0, epochs=3, momentum=0.99, schedule=StepThirds(1e6))
    with pytest.raises(DivergenceError) as info:
        train_model(Architecture(arch.input_dim, arch.num_classes, layernorm=False), small_data, cfg)
    assert info.value.epoch >= 0


def test_mismatched_dataset_rejected(small_data):
    arch = Architecture(small_data.spec.input_dim + 1, small_data.spec.num_classes)
    with pytest.raises(ValidationError):
        train(init_params(arch, 0), small_data, TrainConfig(seed=0, epochs=1))
