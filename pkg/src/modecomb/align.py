"""Weight matching between two networks and tools to corrupt the matching.

``weight_match`` is permutation coordinate descent: every hidden layer's
permutation is re-solved as a linear assignment problem with the other
layers held fixed, sweeping the layers in a seeded random order until a
full pass changes nothing.  Each update maximizes the full parameter dot
product ``flatten(A) . flatten(pi(B))`` over the permutation it controls,
so the objective never decreases.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ValidationError
from .nets import ModelWeights, PermutationSet, apply_permutation, flatten, hidden_outputs, same_arch


def solve_lap_max(cost) -> np.ndarray:
    """Exact maximum-weight perfect matching on a square matrix.

    Shortest augmenting path Hungarian method with row/column potentials,
    O(n^3).  Returns ``sigma`` with ``sigma[i]`` the column assigned to row i.
    """
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValidationError(f"cost matrix must be square, got shape {c.shape}")
    if not np.isfinite(c).all():
        raise ValidationError("cost matrix has non-finite entries")
    n = c.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    # minimize the negated cost; index 0 of u/v/match is a virtual row/column
    a = -c
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    match = np.zeros(n + 1, dtype=np.int64)  # match[j] = row (1-based) owning column j
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match[j0]
            free = ~used[1:]
            cur = a[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            masked = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
            u[match[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
    sigma = np.empty(n, dtype=np.int64)
    sigma[match[1:] - 1] = np.arange(n)
    return sigma


@dataclass(frozen=True, eq=False)
class AlignResult:
    pi: PermutationSet
    objective_trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def alignment_objective(theta_a: ModelWeights, theta_b: ModelWeights, pi: PermutationSet) -> float:
    """``flatten(A) . flatten(pi(B))`` accumulated in double precision."""
    same_arch(theta_a, theta_b)
    fa = flatten(theta_a).astype(np.float64)
    fb = flatten(apply_permutation(theta_b, pi)).astype(np.float64)
    return float(fa @ fb)


def _layer_cost(a: ModelWeights, b: ModelWeights, perms: list, ell: int) -> np.ndarray:
    """Assignment gain matrix for hidden layer ``ell`` (1-based) with the others fixed.

    Entry ``[i, j]`` is the dot-product contribution of putting unit j of B at
    position i.  Incoming weights see the previous layer's permutation on
    their columns, outgoing weights the next layer's on their rows.
    """
    depth = a.arch.depth
    prev = perms[ell - 2] if ell >= 2 else None
    nxt = perms[ell] if ell <= depth - 2 else None
    w_in_a = a.weights[ell - 1].astype(np.float64)
    w_in_b = b.weights[ell - 1].astype(np.float64)
    if prev is not None:
        w_in_b = w_in_b[:, prev]
    w_out_a = a.weights[ell].astype(np.float64)
    w_out_b = b.weights[ell].astype(np.float64)
    if nxt is not None:
        w_out_b = w_out_b[nxt]
    cost = w_in_a @ w_in_b.T + w_out_a.T @ w_out_b
    cost += np.outer(a.biases[ell - 1], b.biases[ell - 1])
    if a.arch.layernorm:
        cost += np.outer(a.gains[ell - 1], b.gains[ell - 1])
        cost += np.outer(a.offsets[ell - 1], b.offsets[ell - 1])
    return cost


def weight_match(theta_a: ModelWeights, theta_b: ModelWeights, seed: int = 0,
                 max_iters: int = 100) -> AlignResult:
    """Permute the hidden units of B so its weights line up with A.

    Starts from identity permutations.  An update is only accepted when it
    strictly raises the layer's assignment value, so exact ties cannot make
    the search cycle.
    """
    arch = same_arch(theta_a, theta_b)
    n_hidden = arch.num_hidden
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x9E3B]))
    perms = [np.arange(arch.hidden_width) for _ in range(n_hidden)]
    trace = [alignment_objective(theta_a, theta_b, PermutationSet(tuple(perms)))]
    scale = max(abs(trace[0]), 1.0)
    converged = False
    iterations = 0
    for iterations in range(1, max_iters + 1):
        changed = False
        for ell in rng.permutation(n_hidden) + 1:
            cost = _layer_cost(theta_a, theta_b, perms, ell)
            sigma = solve_lap_max(cost)
            rows = np.arange(cost.shape[0])
            gain = cost[rows, sigma].sum() - cost[rows, perms[ell - 1]].sum()
            if gain > 1e-10 * scale and not np.array_equal(sigma, perms[ell - 1]):
                perms[ell - 1] = sigma
                changed = True
                trace.append(alignment_objective(theta_a, theta_b, PermutationSet(tuple(perms))))
        if not changed:
            converged = True
            break
    return AlignResult(PermutationSet(tuple(perms)), trace, iterations, converged)


def activation_correlations(theta_a: ModelWeights, theta_b_aligned: ModelWeights, probe_inputs,
                            layer: int) -> np.ndarray:
    """Pearson correlation of each matched unit pair's post-ReLU output over a probe batch.

    A unit with zero variance on either side gets correlation 0.
    """
    arch = same_arch(theta_a, theta_b_aligned)
    probe = np.asarray(probe_inputs)
    if probe.ndim != 2 or probe.shape[0] < 2:
        raise ValidationError("probe batch needs at least 2 inputs")
    if not 1 <= layer <= arch.num_hidden:
        raise ValidationError(f"layer must be in [1, {arch.num_hidden}], got {layer}")
    ha = hidden_outputs(theta_a, probe)[layer - 1].astype(np.float64)
    hb = hidden_outputs(theta_b_aligned, probe)[layer - 1].astype(np.float64)
    ca = ha - ha.mean(axis=0)
    cb = hb - hb.mean(axis=0)
    sa = np.sqrt((ca ** 2).sum(axis=0))
    sb = np.sqrt((cb ** 2).sum(axis=0))
    num = (ca * cb).sum(axis=0)
    ok = (sa > 0) & (sb > 0)
    corr = np.zeros(ha.shape[1])
    corr[ok] = num[ok] / (sa[ok] * sb[ok])
    return np.clip(corr, -1.0, 1.0)


@dataclass(frozen=True)
class PerturbationSpec:
    layer: int
    k: int
    seed: int = 0


def random_derangement(k: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform permutation of ``range(k)`` without fixed points, by rejection."""
    if k < 2:
        raise ValidationError(f"no derangement of {k} elements exists")
    idx = np.arange(k)
    while True:
        sigma = rng.permutation(k)
        if not (sigma == idx).any():
            return sigma


def lowest_k_positions(correlations, k: int) -> np.ndarray:
    """Indices of the k smallest correlations; ties go to the lower unit index."""
    return np.argsort(np.asarray(correlations), kind="stable")[:k]


def derange_lowest_k(pi: PermutationSet, correlations, spec: PerturbationSpec) -> PermutationSet:
    """Re-match the ``k`` lowest-correlation unit pairs of one layer by a random derangement."""
    if not 1 <= spec.layer <= len(pi.perms):
        raise ValidationError(f"layer must be in [1, {len(pi.perms)}], got {spec.layer}")
    perm = pi.perms[spec.layer - 1]
    n = perm.size
    corr = np.asarray(correlations)
    if corr.shape != (n,):
        raise DimensionError(f"expected {n} correlations, got shape {corr.shape}")
    if not 2 <= spec.k <= n:
        raise ValidationError(f"k must lie in [2, {n}], got {spec.k}")
    chosen = lowest_k_positions(corr, spec.k)
    sigma = random_derangement(spec.k, np.random.default_rng(np.random.SeedSequence([spec.seed, 0xDE7A])))
    new = perm.copy()
    new[chosen] = perm[chosen[sigma]]
    return pi.replace(spec.layer, new)
