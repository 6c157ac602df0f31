"""Losses, barriers and the measurement sweeps built on them.

Barriers follow the usual definitions: the loss barrier of a set of
combined models is the worst loss minus the mean endpoint loss; the
accuracy barrier is the mean endpoint accuracy minus the worst accuracy.
Both may be negative when every combination beats the originals.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .align import (AlignResult, PerturbationSpec, activation_correlations, derange_lowest_k,
                    weight_match)
from .combine import (DETERMINISTIC, SamplerSpec, combine_elementwise, combine_three,
                      min_max_vertex, sample_coefficients)
from .errors import DimensionError, ValidationError
from .nets import ModelWeights, apply_permutation, flatten, forward, same_arch
from .training import Dataset, TrainConfig, check_compatible, default_arch, train_model

SPLITS = ("train", "test")
SWEEP_FAMILIES = ("scalar", "uniform", "subcube", "hyperplane", "bernoulli",
                  "stitch", "centered", "extrapolate", "minmax")
DEFAULT_PROBE_SIZE = 2048


@dataclass(frozen=True)
class EvalMetrics:
    loss: float
    accuracy: float
    split: str
    correct: int = 0
    total: int = 0


def metrics_from_logits(logits, labels, split: str) -> EvalMetrics:
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    n = labels.shape[0]
    if n == 0:
        raise ValidationError(f"{split} split is empty")
    if logits.shape[0] != n:
        raise DimensionError("logits and labels disagree in length")
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = float(-logp[np.arange(n), labels].sum() / n)
    correct = int((logits.argmax(axis=1) == labels).sum())
    return EvalMetrics(loss, correct / n, split, correct, n)


def predictions(theta: ModelWeights, data: Dataset, split: str = "test") -> np.ndarray:
    return forward(theta, data.split(split).inputs).argmax(axis=1)


def evaluate(theta: ModelWeights, data: Dataset, split: str = "test") -> EvalMetrics:
    """Mean cross-entropy and accuracy over a whole split."""
    part = data.split(split)
    if len(part) == 0:
        raise ValidationError(f"{split} split is empty")
    return metrics_from_logits(forward(theta, part.inputs), part.labels, split)


def evaluate_both(theta: ModelWeights, data: Dataset) -> dict:
    return {s: evaluate(theta, data, s) for s in SPLITS}


def loss_barrier(endpoint_a: EvalMetrics, endpoint_b: EvalMetrics, path: Sequence[EvalMetrics]) -> float:
    if len(path) == 0:
        raise ValidationError("path must be nonempty")
    return max(m.loss for m in path) - 0.5 * (endpoint_a.loss + endpoint_b.loss)


@dataclass(frozen=True)
class BarrierReport:
    empirical_loss_barrier: float
    empirical_accuracy_barrier: float
    worst_loss_sample: object = None
    worst_accuracy_sample: object = None
    split: Optional[str] = None


def empirical_barrier(endpoints: Sequence[EvalMetrics], samples: Sequence[EvalMetrics],
                      keys: Optional[Sequence] = None) -> BarrierReport:
    """Worst-sample barriers against the two endpoint metrics.

    ``keys`` label the samples; the worst sample is reported by key (the
    smallest key among exact ties) or by position when no keys are given.
    """
    if len(samples) == 0:
        raise ValidationError("need at least one sample")
    a, b = endpoints
    if keys is None:
        keys = list(range(len(samples)))
    elif len(keys) != len(samples):
        raise DimensionError("keys and samples differ in length")
    worst_loss = max(m.loss for m in samples)
    worst_acc = min(m.accuracy for m in samples)
    loss_key = min(k for k, m in zip(keys, samples) if m.loss == worst_loss)
    acc_key = min(k for k, m in zip(keys, samples) if m.accuracy == worst_acc)
    return BarrierReport(
        worst_loss - 0.5 * (a.loss + b.loss),
        0.5 * (a.accuracy + b.accuracy) - worst_acc,
        loss_key, acc_key, samples[0].split,
    )


@dataclass(frozen=True)
class SweepRecord:
    param: float
    sample_index: int
    train: EvalMetrics
    test: EvalMetrics

    def metrics(self, split: str) -> EvalMetrics:
        return self.train if split == "train" else self.test


@dataclass(frozen=True, eq=False)
class SweepResult:
    scheme: str
    grid: list
    records: list
    endpoints: dict = field(default_factory=dict)  # {"a": {split: EvalMetrics}, "b": {...}}

    def samples(self, split: str = "test") -> list:
        return [r.metrics(split) for r in self.records]

    def barrier(self, split: str = "test") -> BarrierReport:
        keys = [(r.param, r.sample_index) for r in self.records]
        ends = (self.endpoints["a"][split], self.endpoints["b"][split])
        return empirical_barrier(ends, self.samples(split), keys)

    def at(self, param: float, split: str = "test") -> list:
        return [r.metrics(split) for r in self.records if r.param == param]


def default_grid(family: str, grid_size: int, depth: int) -> list:
    """Equidistant parameter values for a sweep.

    Hyperplane sweeps use the interior points ``i / (grid_size + 1)``
    because alpha = 0 and 1 are not valid distribution parameters.  Stitch
    sweeps cover every cut layer ``0..depth`` regardless of ``grid_size``.
    """
    if grid_size < 1 and family != "stitch":
        raise ValidationError("grid_size must be positive")
    if family in ("scalar", "subcube", "bernoulli", "minmax"):
        return [float(x) for x in np.linspace(0.0, 1.0, grid_size)]
    if family in ("uniform", "centered"):
        return [float(x) for x in np.linspace(0.0, 0.5, grid_size)]
    if family == "hyperplane":
        return [(i + 1) / (grid_size + 1) for i in range(grid_size)]
    if family == "extrapolate":
        return [float(x) for x in np.linspace(-1.0, 2.0, grid_size)]
    if family == "stitch":
        return [float(x) for x in range(depth + 1)]
    raise ValidationError(f"unknown sweep family {family!r}; expected one of {SWEEP_FAMILIES}")


def run_sweep(theta_a: ModelWeights, theta_b: ModelWeights, family: str, data: Dataset,
              grid_size: int = 25, samples_per_point: Optional[int] = None, seed: int = 0,
              grid: Optional[Sequence[float]] = None) -> SweepResult:
    """Evaluate combined models over a parameter grid on both splits.

    Draw ``j`` at grid position ``i`` uses draw index ``i * samples_per_point + j``
    of the sampler keyed by ``seed``.  ``minmax`` interpolates from the Min
    vertex (parameter 0) to the Max vertex (parameter 1).
    """
    arch = same_arch(theta_a, theta_b)
    check_compatible(data, theta_a, theta_b)
    if family not in SWEEP_FAMILIES:
        raise ValidationError(f"unknown sweep family {family!r}; expected one of {SWEEP_FAMILIES}")
    deterministic = family in DETERMINISTIC or family == "minmax"
    if samples_per_point is None:
        samples_per_point = 1 if deterministic else 8
    if samples_per_point < 1:
        raise ValidationError("samples_per_point must be positive")
    if deterministic:
        samples_per_point = 1
    params = list(grid) if grid is not None else default_grid(family, grid_size, arch.depth)
    if family == "minmax":
        v_min = min_max_vertex(theta_a, theta_b, "min").v
        v_max = min_max_vertex(theta_a, theta_b, "max").v

    records = []
    for i, p in enumerate(params):
        for j in range(samples_per_point):
            if family == "minmax":
                v = (1.0 - p) * v_min + p * v_max
            else:
                v = sample_coefficients(SamplerSpec(family, p, seed), arch, i * samples_per_point + j).v
            model = combine_elementwise(theta_a, theta_b, v)
            m = evaluate_both(model, data)
            records.append(SweepRecord(float(p), j, m["train"], m["test"]))
    endpoints = {"a": evaluate_both(theta_a, data), "b": evaluate_both(theta_b, data)}
    return SweepResult(family, [float(p) for p in params], records, endpoints)


@dataclass(frozen=True)
class AgreementCounts:
    """Test points bucketed by which original model the combination agrees with."""

    a_only_correct: int = 0
    a_only_wrong: int = 0
    b_only_correct: int = 0
    b_only_wrong: int = 0
    both_correct: int = 0
    both_wrong: int = 0
    neither_correct: int = 0
    neither_wrong: int = 0

    @property
    def total(self) -> int:
        return sum(self.as_dict().values())

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def agreement_analysis(preds_a, preds_b, preds_m, labels) -> AgreementCounts:
    arrays = [np.asarray(x) for x in (preds_a, preds_b, preds_m, labels)]
    if len({a.shape for a in arrays}) != 1 or arrays[0].ndim != 1:
        raise ValidationError("prediction and label vectors must be 1-D and of equal length")
    pa, pb, pm, y = arrays
    with_a, with_b, correct = pm == pa, pm == pb, pm == y
    groups = {"a_only": with_a & ~with_b, "b_only": ~with_a & with_b,
              "both": with_a & with_b, "neither": ~with_a & ~with_b}
    counts = {}
    for name, mask in groups.items():
        counts[f"{name}_correct"] = int((mask & correct).sum())
        counts[f"{name}_wrong"] = int((mask & ~correct).sum())
    return AgreementCounts(**counts)


@dataclass(frozen=True, eq=False)
class Histogram:
    counts: np.ndarray
    edges: np.ndarray


def edge_lengths(theta_a: ModelWeights, theta_b_aligned: ModelWeights, num_bins: int = 50) -> Histogram:
    """Histogram of ``|A_i - pi(B)_i|`` with equal-width bins from 0 to the maximum."""
    same_arch(theta_a, theta_b_aligned)
    if num_bins < 1:
        raise ValidationError("num_bins must be positive")
    diff = np.abs(flatten(theta_a).astype(np.float64) - flatten(theta_b_aligned).astype(np.float64))
    top = float(diff.max())
    counts, edges = np.histogram(diff, bins=num_bins, range=(0.0, top if top > 0 else 1.0))
    return Histogram(counts, edges)


@dataclass(frozen=True, eq=False)
class PerturbationResult:
    k: int
    report: BarrierReport
    pi: object
    sweep: SweepResult


def perturbation_sweep(theta_a: ModelWeights, theta_b: ModelWeights, align_result: AlignResult,
                       layer: int, k_values: Sequence[int], data: Dataset, seed: int = 0,
                       grid_size: int = 25, probe_size: int = DEFAULT_PROBE_SIZE,
                       split: str = "test") -> list:
    """Barrier of A against B after the ``k`` least-correlated matches of ``layer`` are deranged.

    Correlations come from the aligned pair on the first ``probe_size``
    training inputs.
    """
    if len(k_values) == 0:
        return []
    aligned = apply_permutation(theta_b, align_result.pi)
    probe = data.train.inputs[:probe_size]
    corr = activation_correlations(theta_a, aligned, probe, layer)
    out = []
    for k in k_values:
        pi_k = derange_lowest_k(align_result.pi, corr, PerturbationSpec(layer, int(k), seed + int(k)))
        sweep = run_sweep(theta_a, apply_permutation(theta_b, pi_k), "scalar", data, grid_size=grid_size)
        out.append(PerturbationResult(int(k), sweep.barrier(split), pi_k, sweep))
    return out


@dataclass(frozen=True)
class TrianglePoint:
    lambda_b: float
    lambda_c: float
    train: EvalMetrics
    test: EvalMetrics


@dataclass(frozen=True, eq=False)
class TriangleResult:
    points: list
    best: TrianglePoint


def triangle_grid(resolution: int) -> list:
    if resolution < 2:
        raise ValidationError("resolution must be at least 2")
    step = resolution - 1
    return [(i / step, j / step) for i in range(resolution) for j in range(resolution - i)]


def triangle_heatmap(theta_a: ModelWeights, theta_b_pi: ModelWeights, theta_c_pi: ModelWeights,
                     grid_resolution: int, data: Dataset) -> TriangleResult:
    """Three-model combinations over the barycentric grid ``lambda_b + lambda_c <= 1``.

    The best point has the highest test accuracy, then the lowest test loss.
    """
    check_compatible(data, theta_a, theta_b_pi, theta_c_pi)
    points = []
    for lb, lc in triangle_grid(grid_resolution):
        m = evaluate_both(combine_three(theta_a, theta_b_pi, theta_c_pi, lb, lc), data)
        points.append(TrianglePoint(lb, lc, m["train"], m["test"]))
    best = min(points, key=lambda p: (-p.test.accuracy, p.test.loss))
    return TriangleResult(points, best)


@dataclass(frozen=True)
class WidthRow:
    multiplier: int
    pair: int
    scheme: str
    loss_barrier: float
    accuracy_barrier: float


def width_ablation(multipliers: Sequence[int], schemes: Sequence[str], data: Dataset,
                   seeds: Sequence[tuple], train_cfg: TrainConfig, depth: int = 4,
                   layernorm: bool = True, grid_size: int = 25,
                   samples_per_point: Optional[int] = None, align_seed: int = 0) -> list:
    """Worst-case test barriers per (width, seed pair, scheme) for freshly trained aligned pairs.

    ``seeds`` holds one ``(seed_a, seed_b)`` training seed pair per row group.
    """
    if len(multipliers) == 0 or len(schemes) == 0 or len(seeds) == 0:
        raise ValidationError("need at least one multiplier, scheme and seed pair")
    rows = []
    for mult in multipliers:
        arch = default_arch(data.spec, int(mult), depth, layernorm)
        for pair, (seed_a, seed_b) in enumerate(seeds):
            a = train_model(arch, data, _with_seed(train_cfg, seed_a))
            b = train_model(arch, data, _with_seed(train_cfg, seed_b))
            b_pi = apply_permutation(b, weight_match(a, b, align_seed).pi)
            for scheme in schemes:
                rep = run_sweep(a, b_pi, scheme, data, grid_size, samples_per_point, seed=pair).barrier("test")
                rows.append(WidthRow(int(mult), pair, scheme,
                                     rep.empirical_loss_barrier, rep.empirical_accuracy_barrier))
    return rows


def _with_seed(cfg: TrainConfig, seed: int) -> TrainConfig:
    return replace(cfg, seed=int(seed))
