import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from modecomb.align import weight_match
from modecomb.combine import combine_elementwise, min_max_vertex
from modecomb.errors import ValidationError
from modecomb.evaluation import (AgreementCounts, EvalMetrics, agreement_analysis, default_grid,
                                 edge_lengths, empirical_barrier, evaluate, evaluate_both, loss_barrier,
                                 metrics_from_logits, perturbation_sweep, run_sweep, triangle_grid,
                                 triangle_heatmap, width_ablation)
from modecomb.nets import Architecture, apply_permutation, flatten, unflatten, zeros_like_arch
from modecomb.training import CosineWarmup, TrainConfig, default_arch, train_model

from conftest import random_model, random_perms


def m(loss, acc, split="test"):
    return EvalMetrics(loss, acc, split)


def test_uniform_logits_give_log_classes(small_data):
    arch = Architecture(small_data.spec.input_dim, small_data.spec.num_classes, layernorm=False)
    res = evaluate(zeros_like_arch(arch), small_data)
    assert res.loss == pytest.approx(math.log(small_data.spec.num_classes), abs=1e-12)


def test_one_hot_oracle_is_perfect():
    labels = np.array([2, 0, 1, 1, 3])
    res = metrics_from_logits(np.eye(4)[labels] * 50.0, labels, "test")
    assert res.accuracy == 1.0 and res.correct == res.total == 5
    with pytest.raises(ValidationError):
        metrics_from_logits(np.zeros((0, 4)), np.zeros(0, int), "test")


def test_accuracy_is_exact_fraction(small_pair, small_data):
    a, _ = small_pair
    res = evaluate(a, small_data, "train")
    assert res.accuracy == res.correct / res.total and res.total == len(small_data.train)
    with pytest.raises(ValidationError):
        evaluate(a, small_data, "validation")


def test_evaluation_is_permutation_invariant(small_pair, small_data):
    a, _ = small_pair
    p = apply_permutation(a, random_perms(a.arch, 3))
    for split in ("train", "test"):
        x, y = evaluate(a, small_data, split), evaluate(p, small_data, split)
        assert abs(x.loss - y.loss) <= 1e-5 and x.accuracy == y.accuracy


def test_loss_barrier_arithmetic():
    ends = m(0.5, 0.9), m(0.5, 0.9)
    assert loss_barrier(*ends, [m(0.5, 0.9)] * 3) == 0.0
    assert loss_barrier(*ends, [m(0.4, 0), m(0.6, 0), m(0.55, 0)]) == pytest.approx(0.1)
    assert loss_barrier(*ends, [m(0.3, 0), m(0.2, 0)]) < 0
    assert loss_barrier(m(0.2, 1), m(0.4, 1), [m(0.2, 1), m(0.4, 1)]) == pytest.approx(0.1)
    with pytest.raises(ValidationError):
        loss_barrier(*ends, [])


def test_empirical_barrier_arithmetic():
    rep = empirical_barrier([m(0.3, 0.8), m(0.5, 0.9)], [m(0.4, 0.85)])
    assert rep.empirical_loss_barrier == 0.0 and rep.empirical_accuracy_barrier == pytest.approx(0.0)
    rep = empirical_barrier([m(0.2, 0.92), m(0.2, 0.94)], [m(0.21, 0.93), m(0.25, 0.918), m(0.3, 0.925)])
    assert rep.empirical_accuracy_barrier == pytest.approx(0.012)
    assert rep.empirical_loss_barrier == pytest.approx(0.1)
    assert rep.worst_accuracy_sample == 1 and rep.worst_loss_sample == 2


@settings(max_examples=40, deadline=None)
@given(vals=st.lists(st.tuples(st.floats(0, 5), st.floats(0, 1)), min_size=1, max_size=12),
       seed=st.integers(0, 1000))
def test_empirical_barrier_is_order_free_and_monotone(vals, seed):
    ends = [m(1.0, 0.5), m(2.0, 0.7)]
    samples = [m(l, a) for l, a in vals]
    keys = list(range(len(samples)))
    order = np.random.default_rng(seed).permutation(len(samples))
    base = empirical_barrier(ends, samples, keys)
    shuffled = empirical_barrier(ends, [samples[i] for i in order], [keys[i] for i in order])
    assert base == shuffled
    better = empirical_barrier(ends, samples + [m(0.0, 1.0)], keys + [len(keys)])
    assert better.empirical_loss_barrier == base.empirical_loss_barrier
    assert better.empirical_accuracy_barrier == base.empirical_accuracy_barrier


def test_default_grids():
    assert np.allclose(default_grid("scalar", 25, 4), [i / 24 for i in range(25)], rtol=0, atol=1e-15)
    assert default_grid("hyperplane", 3, 4) == [0.25, 0.5, 0.75]
    assert default_grid("stitch", 25, 4) == [0.0, 1.0, 2.0, 3.0, 4.0]
    assert default_grid("extrapolate", 4, 4) == [-1.0, 0.0, 1.0, 2.0]
    assert default_grid("uniform", 3, 4) == [0.0, 0.25, 0.5]
    g = default_grid("bernoulli", 25, 4)
    assert len(g) == 25 and np.allclose(np.diff(g), 1 / 24)
    with pytest.raises(ValidationError):
        default_grid("spiral", 5, 4)


def test_two_point_scalar_sweep_hits_endpoints(small_pair, small_data):
    a, b = small_pair
    res = run_sweep(a, b, "scalar", small_data, grid_size=2)
    assert res.grid == [0.0, 1.0] and len(res.records) == 2
    for rec, model in zip(res.records, (a, b)):
        ref = evaluate_both(model, small_data)
        assert rec.train == ref["train"] and rec.test == ref["test"]
    assert res.endpoints["a"]["test"] == evaluate(a, small_data)


def test_identical_models_give_flat_sweeps(small_pair, small_data):
    a, _ = small_pair
    ref = evaluate_both(a, small_data)
    for family in ("scalar", "uniform", "subcube", "hyperplane", "bernoulli", "stitch", "minmax"):
        res = run_sweep(a, a, family, small_data, grid_size=3, samples_per_point=2)
        for rec in res.records:
            assert rec.test.accuracy == ref["test"].accuracy
            assert rec.train.loss == pytest.approx(ref["train"].loss, abs=1e-6)


def test_sweep_shape_and_determinism(small_pair, small_data):
    a, b = small_pair
    res = run_sweep(a, b, "bernoulli", small_data, grid_size=4, samples_per_point=3, seed=5)
    assert [(r.param, r.sample_index) for r in res.records] == [(p, j) for p in res.grid for j in range(3)]
    again = run_sweep(a, b, "bernoulli", small_data, grid_size=4, samples_per_point=3, seed=5)
    assert [r.test for r in res.records] == [r.test for r in again.records]
    assert len(run_sweep(a, b, "scalar", small_data, grid_size=4, samples_per_point=3).records) == 4
    with pytest.raises(ValidationError):
        run_sweep(a, b, "spiral", small_data)


def test_minmax_sweep_endpoints_are_vertices(small_pair, small_data):
    a, b = small_pair
    res = run_sweep(a, b, "minmax", small_data, grid_size=2)
    lo = evaluate(combine_elementwise(a, b, min_max_vertex(a, b, "min")), small_data)
    hi = evaluate(combine_elementwise(a, b, min_max_vertex(a, b, "max")), small_data)
    assert res.records[0].test == lo and res.records[1].test == hi


def test_alignment_lowers_loss_barrier(small_data):
    arch = default_arch(small_data.spec, width_multiplier=4)
    cfg = lambda s: TrainConfig(seed=s, epochs=10, schedule=CosineWarmup(0.1, 1.0))
    a, b = train_model(arch, small_data, cfg(21)), train_model(arch, small_data, cfg(22))
    aligned = apply_permutation(b, weight_match(a, b).pi)
    naive = run_sweep(a, b, "scalar", small_data).barrier().empirical_loss_barrier
    matched = run_sweep(a, aligned, "scalar", small_data).barrier().empirical_loss_barrier
    assert matched < naive


def test_agreement_simple_cases():
    y = np.array([0, 1, 2, 3])
    assert agreement_analysis(y, y, y, y).both_correct == 4
    c = agreement_analysis(np.zeros(4, int), np.zeros(4, int), np.ones(4, int) + 5, y)
    assert c.neither_correct + c.neither_wrong == 4 and c.neither_wrong == 4
    with pytest.raises(ValidationError):
        agreement_analysis(y, y, y, y[:3])


def test_agreement_hand_built_case():
    pa = np.array([0, 1, 2, 0, 1, 2, 0, 1, 2, 0])
    pb = np.array([0, 1, 0, 1, 1, 0, 2, 2, 2, 1])
    pm = np.array([0, 1, 2, 1, 2, 0, 1, 1, 2, 2])
    y = np.array([0, 2, 2, 1, 2, 1, 1, 0, 0, 2])
    # position by position: (matches A, matches B, correct)
    # 0: A B c | 1: A B w | 2: A - c | 3: - B c | 4: - - c
    # 5: - B w | 6: - - c | 7: A - w | 8: A B w | 9: - - c
    expected = AgreementCounts(a_only_correct=1, a_only_wrong=1, b_only_correct=1, b_only_wrong=1,
                               both_correct=1, both_wrong=2, neither_correct=3, neither_wrong=0)
    assert agreement_analysis(pa, pb, pm, y) == expected
    # enumeration oracle
    counts = {}
    for i in range(10):
        key = {(True, False): "a_only", (False, True): "b_only", (True, True): "both",
               (False, False): "neither"}[(pm[i] == pa[i], pm[i] == pb[i])]
        key += "_correct" if pm[i] == y[i] else "_wrong"
        counts[key] = counts.get(key, 0) + 1
    assert expected.as_dict() == {k: counts.get(k, 0) for k in expected.as_dict()}


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 300), k=st.integers(2, 6))
def test_agreement_partition_is_exhaustive(seed, n, k):
    rng = np.random.default_rng(seed)
    arrs = [rng.integers(0, k, n) for _ in range(4)]
    c = agreement_analysis(*arrs)
    assert c.total == n
    assert c.both_correct + c.both_wrong <= int((arrs[0] == arrs[1]).sum())


def test_edge_lengths():
    arch = Architecture(4, 3, depth=2, base_width=3)
    a = random_model(arch, 0)
    same = edge_lengths(a, a, 10)
    assert same.counts[0] == arch.num_params and same.counts[1:].sum() == 0
    fa = flatten(a).astype(np.float64)
    shift = np.zeros(arch.num_params)
    shift[::3] = 1.0
    h = edge_lengths(a, unflatten(fa + shift, arch), 2)
    assert h.counts.sum() == arch.num_params
    assert list(h.counts) == [int((shift == 0).sum()), int((shift == 1).sum())]
    assert h.edges[0] == 0.0 and h.edges[-1] == pytest.approx(1.0, abs=1e-6)


def test_perturbation_sweep(small_pair, small_data):
    a, b = small_pair
    res = weight_match(a, b)
    assert perturbation_sweep(a, b, res, 1, [], small_data) == []
    out = perturbation_sweep(a, b, res, 2, [2, 16], small_data, grid_size=5)
    assert [p.k for p in out] == [2, 16]
    for p in out:
        moved = p.pi.perms[1] != res.pi.perms[1]
        assert moved.sum() == p.k
        assert np.array_equal(p.pi.perms[0], res.pi.perms[0])
    # undoing the derangement restores the aligned barrier
    base = run_sweep(a, apply_permutation(b, res.pi), "scalar", small_data, grid_size=5).barrier()
    restored = out[0].pi.replace(2, res.pi.perms[1])
    again = run_sweep(a, apply_permutation(b, restored), "scalar", small_data, grid_size=5).barrier()
    assert again == base


def test_triangle_heatmap(small_pair, small_data):
    a, b = small_pair
    c = apply_permutation(b, random_perms(b.arch, 4))
    assert triangle_grid(2) == [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0)]
    assert len(triangle_grid(5)) == 15
    corners = triangle_heatmap(a, b, c, 2, small_data)
    got = {(p.lambda_b, p.lambda_c): p.test for p in corners.points}
    assert got[(0.0, 0.0)] == evaluate(a, small_data)
    assert got[(1.0, 0.0)] == evaluate(b, small_data)
    assert got[(0.0, 1.0)] == evaluate(c, small_data)
    assert corners.best.test.accuracy == max(v.accuracy for v in got.values())

    full = triangle_heatmap(a, b, c, 5, small_data)
    edge = {p.lambda_b: p.test for p in full.points if p.lambda_c == 0.0}
    sweep = run_sweep(a, b, "scalar", small_data, grid_size=5)
    for rec in sweep.records:
        assert edge[rec.param].accuracy == rec.test.accuracy
        assert edge[rec.param].loss == pytest.approx(rec.test.loss, abs=1e-5)


def test_width_ablation_single_row_matches_sweep(small_data):
    cfg = TrainConfig(seed=0, epochs=3, schedule=CosineWarmup(0.1, 1.0))
    rows = width_ablation([1], ["scalar"], small_data, [(5, 6)], cfg, grid_size=5)
    assert len(rows) == 1
    arch = default_arch(small_data.spec, 1)
    a = train_model(arch, small_data, TrainConfig(seed=5, epochs=3, schedule=cfg.schedule))
    b = train_model(arch, small_data, TrainConfig(seed=6, epochs=3, schedule=cfg.schedule))
    rep = run_sweep(a, apply_permutation(b, weight_match(a, b).pi), "scalar", small_data, grid_size=5).barrier()
    assert rows[0].accuracy_barrier == rep.empirical_accuracy_barrier
    assert rows[0].loss_barrier == rep.empirical_loss_barrier
    with pytest.raises(ValidationError):
        width_ablation([], ["scalar"], small_data, [(1, 2)], cfg)
