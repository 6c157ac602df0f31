"""Element-wise combinations of two (or three) parameter vectors.

A coefficient vector ``v`` of length ``d`` picks, per scalar parameter,

    theta_v = v * theta_a + (1 - v) * theta_b

so ``v = 1`` is model A and ``v = 0`` is model B.  Every sampler below is
oriented the same way: its interpolation parameter at 0 gives model A.

Random samplers are keyed on ``(rng_seed, draw_index)``; coordinate ``i`` of
a draw is the ``i``-th variate of a Philox stream opened from that key, so
draws can be generated in any order or in parallel with identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DimensionError, ValidationError
from .nets import Architecture, ModelWeights, flatten, layer_index_vector, same_arch, unflatten

FAMILIES = ("scalar", "uniform", "subcube", "hyperplane", "bernoulli",
            "stitch", "centered", "extrapolate")
DETERMINISTIC = frozenset({"scalar", "stitch", "extrapolate"})


@dataclass(frozen=True)
class SamplerSpec:
    """A coefficient distribution: family name, its parameter and the seed.

    ==============  =========================  ===============================
    family          parameter                  coordinates of ``v``
    ==============  =========================  ===============================
    ``scalar``      lambda in [0, 1]           ``1 - lambda``
    ``uniform``     s in [0, 0.5]              ``U[0.5 - s, 0.5 + s]``
    ``subcube``     lambda in [0, 1]           ``U[1 - 2 lambda, 1]`` or
                                               ``U[0, 2 (1 - lambda)]``
    ``hyperplane``  alpha in (0, 1)            ``1 - X``, X truncated
                                               exponential with mean alpha
    ``bernoulli``   p in [0, 1]                0 with probability p, else 1
    ``stitch``      cut layer l in [0, L]      0 in layers <= l, else 1
    ``centered``    s >= 0                     ``U[1 - s, 1 + s]``
    ``extrapolate`` lambda in [-1, 2]          ``1 - lambda``
    ==============  =========================  ===============================
    """

    family: str
    param: float
    rng_seed: int = 0

    def __post_init__(self):
        f, p = self.family, self.param
        if f not in FAMILIES:
            raise ValidationError(f"unknown sampler family {f!r}; expected one of {FAMILIES}")
        if not math.isfinite(p):
            raise ValidationError(f"{f} parameter must be finite")
        ok = {
            "scalar": 0 <= p <= 1,
            "uniform": 0 <= p <= 0.5,
            "subcube": 0 <= p <= 1,
            "hyperplane": 0 < p < 1,
            "bernoulli": 0 <= p <= 1,
            "stitch": p >= 0 and float(p).is_integer(),
            "centered": p >= 0,
            "extrapolate": -1 <= p <= 2,
        }[f]
        if not ok:
            raise ValidationError(f"{f} parameter out of range: {p}")

    @property
    def deterministic(self) -> bool:
        return self.family in DETERMINISTIC


@dataclass(frozen=True, eq=False)
class CoefficientVector:
    v: np.ndarray
    provenance: object = None

    def __len__(self):
        return int(self.v.shape[0])


def truncexp_mean(rate: float) -> float:
    """Mean of the density proportional to ``exp(-rate * x)`` on [0, 1]."""
    if abs(rate) < 1e-3:
        return 0.5 - rate / 12.0 + rate ** 3 / 720.0
    if rate > 700:
        return 1.0 / rate
    if rate < -700:
        return 1.0 + 1.0 / rate
    return 1.0 / rate - 1.0 / math.expm1(rate)


def solve_truncexp_rate(alpha: float, tol: float = 1e-10) -> float:
    """Rate whose truncated exponential on [0, 1] has mean ``alpha``, by bisection.

    The mean is strictly decreasing in the rate; ``m(-1/(1-alpha)) > alpha > m(1/alpha)``
    brackets the root.  Rates for ``alpha`` and ``1 - alpha`` are exact negatives.
    """
    if not 0 < alpha < 1:
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha}")
    if alpha == 0.5:
        return 0.0
    if alpha > 0.5:
        return -solve_truncexp_rate(1.0 - alpha, tol)
    lo, hi = -1.0 / (1.0 - alpha), 1.0 / alpha
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        m = truncexp_mean(mid)
        if m > alpha:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * np.finfo(float).eps * max(1.0, abs(mid)):
            break
    rate = 0.5 * (lo + hi)
    if abs(truncexp_mean(rate) - alpha) >= tol:
        raise ValidationError(f"bisection did not reach tolerance {tol} for alpha={alpha}")
    return rate


def truncexp_inverse_cdf(u, rate: float) -> np.ndarray:
    """Map uniforms in [0, 1) to the truncated exponential with the given rate."""
    u = np.asarray(u, dtype=np.float64)
    if rate == 0:
        return u.copy()
    if rate < 0:
        # reflection x -> 1 - x flips the sign of the rate
        return 1.0 - truncexp_inverse_cdf(1.0 - u, -rate)
    x = -np.log1p(u * math.expm1(-rate)) / rate
    return np.clip(x, 0.0, 1.0)


def _stream(rng_seed: int, draw_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([rng_seed, draw_index])))


def sample_coefficients(spec: SamplerSpec, target: Union[int, Architecture], draw_index: int = 0) -> CoefficientVector:
    """Draw one coefficient vector.

    ``target`` is either the parameter count ``d`` or an architecture; the
    ``stitch`` family needs the architecture to know layer boundaries.
    """
    if isinstance(target, Architecture):
        arch, d = target, target.num_params
    else:
        arch, d = None, int(target)
    if d < 1:
        raise ValidationError("d must be positive")
    f, p = spec.family, spec.param
    if f in ("scalar", "extrapolate"):
        v = np.full(d, 1.0 - p)
    elif f == "stitch":
        if arch is None:
            raise ValidationError("stitch sampling needs the architecture, not just d")
        if p > arch.depth:
            raise ValidationError(f"stitch cut layer must be in [0, {arch.depth}], got {p}")
        v = (layer_index_vector(arch) > p).astype(np.float64)
    else:
        rng = _stream(spec.rng_seed, draw_index)
        if f == "uniform":
            v = rng.uniform(0.5 - p, 0.5 + p, size=d)
        elif f == "subcube":
            if p <= 0.5:
                v = rng.uniform(1.0 - 2.0 * p, 1.0, size=d)
            else:
                v = rng.uniform(0.0, 2.0 * (1.0 - p), size=d)
        elif f == "hyperplane":
            v = 1.0 - truncexp_inverse_cdf(rng.random(d), solve_truncexp_rate(p))
        elif f == "bernoulli":
            v = (rng.random(d) >= p).astype(np.float64)
        elif f == "centered":
            v = rng.uniform(1.0 - p, 1.0 + p, size=d)
        else:  # pragma: no cover - guarded by SamplerSpec
            raise ValidationError(f)
    return CoefficientVector(v, spec)


def combine_elementwise(theta_a: ModelWeights, theta_b: ModelWeights, v) -> ModelWeights:
    arch = same_arch(theta_a, theta_b)
    coeff = np.asarray(v.v if isinstance(v, CoefficientVector) else v, dtype=np.float64)
    if coeff.shape != (arch.num_params,):
        raise DimensionError(f"coefficient vector has shape {coeff.shape}, expected ({arch.num_params},)")
    fa = flatten(theta_a).astype(np.float64)
    fb = flatten(theta_b).astype(np.float64)
    return unflatten(coeff * fa + (1.0 - coeff) * fb, arch)


def min_max_vertex(theta_a: ModelWeights, theta_b: ModelWeights, mode: str) -> CoefficientVector:
    """Vertex taking, per coordinate, the weight of smaller (``"min"``) or larger (``"max"``) magnitude.

    Ties go to model A.
    """
    same_arch(theta_a, theta_b)
    abs_a = np.abs(flatten(theta_a))
    abs_b = np.abs(flatten(theta_b))
    if mode == "min":
        v = abs_a <= abs_b
    elif mode == "max":
        v = abs_a >= abs_b
    else:
        raise ValidationError(f"mode must be 'min' or 'max', got {mode!r}")
    return CoefficientVector(v.astype(np.float64), ("minmax", mode))


def combine_three(theta_a: ModelWeights, theta_b_pi: ModelWeights, theta_c_pi: ModelWeights,
                  lambda_b: float, lambda_c: float) -> ModelWeights:
    """``A + lambda_b (B - A) + lambda_c (C - A)`` for models already aligned to A."""
    arch = same_arch(theta_a, theta_b_pi, theta_c_pi)
    fa = flatten(theta_a).astype(np.float64)
    fb = flatten(theta_b_pi).astype(np.float64)
    fc = flatten(theta_c_pi).astype(np.float64)
    # weights summing to one keep the corners bit-exact
    return unflatten((1.0 - lambda_b - lambda_c) * fa + lambda_b * fb + lambda_c * fc, arch)
