"""Dense ReLU networks, their flat parameter vectors and hidden-unit permutations.

A network with ``depth`` weight layers maps ``input_dim`` features to
``num_classes`` logits.  Every hidden layer computes

    affine -> (optional) layer normalization -> ReLU

and the last layer is a plain affine map.  Parameters are stored in single
precision.

Flattened parameter order is layer-major.  For each layer ``l = 1..L`` the
vector holds, in this order: ``W_l`` (row-major, shape ``out x in``),
``b_l``, and for hidden layers with layer normalization ``g_l`` then ``o_l``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionError, ValidationError

LN_EPS = 1e-5
DTYPE = np.float32


@dataclass(frozen=True)
class Architecture:
    input_dim: int
    num_classes: int
    depth: int = 4
    base_width: int = 16
    width_multiplier: int = 1
    layernorm: bool = True

    def __post_init__(self):
        for name in ("input_dim", "num_classes", "depth", "base_width", "width_multiplier"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise ValidationError(f"{name} must be a positive integer, got {value!r}")
        if self.depth < 2:
            raise ValidationError(f"depth must be at least 2 (one hidden layer), got {self.depth}")

    @property
    def hidden_width(self) -> int:
        return self.base_width * self.width_multiplier

    @property
    def num_hidden(self) -> int:
        return self.depth - 1

    def layer_shapes(self) -> list[tuple[int, int]]:
        """(out, in) of every weight matrix, first layer first."""
        h = self.hidden_width
        dims = [self.input_dim] + [h] * (self.depth - 1) + [self.num_classes]
        return [(dims[i + 1], dims[i]) for i in range(self.depth)]

    def param_layout(self) -> list[tuple[str, int, tuple[int, ...]]]:
        """(name, layer index, shape) of every parameter array in flatten order."""
        layout = []
        for ell, (out, inp) in enumerate(self.layer_shapes(), start=1):
            layout.append((f"layer{ell}.weight", ell, (out, inp)))
            layout.append((f"layer{ell}.bias", ell, (out,)))
            if self.layernorm and ell < self.depth:
                layout.append((f"layer{ell}.gain", ell, (out,)))
                layout.append((f"layer{ell}.offset", ell, (out,)))
        return layout

    @property
    def num_params(self) -> int:
        return sum(int(np.prod(shape)) for _, _, shape in self.param_layout())


def _frozen(array, shape, name) -> np.ndarray:
    out = np.array(array, dtype=DTYPE, copy=True)
    if out.shape != tuple(shape):
        raise DimensionError(f"{name}: expected shape {tuple(shape)}, got {out.shape}")
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class ModelWeights:
    """Immutable parameter container for one network.

    ``gains`` and ``offsets`` hold one array per hidden layer when the
    architecture uses layer normalization and are empty tuples otherwise.
    """

    arch: Architecture
    weights: tuple
    biases: tuple
    gains: tuple = ()
    offsets: tuple = ()

    def __post_init__(self):
        arch = self.arch
        shapes = arch.layer_shapes()
        if len(self.weights) != arch.depth or len(self.biases) != arch.depth:
            raise DimensionError(
                f"expected {arch.depth} weight matrices and biases, "
                f"got {len(self.weights)} and {len(self.biases)}"
            )
        n_norm = arch.num_hidden if arch.layernorm else 0
        if len(self.gains) != n_norm or len(self.offsets) != n_norm:
            raise DimensionError(
                f"expected {n_norm} normalization gains/offsets, "
                f"got {len(self.gains)} and {len(self.offsets)}"
            )
        ws = tuple(_frozen(w, s, f"layer{i + 1}.weight") for i, (w, s) in enumerate(zip(self.weights, shapes)))
        bs = tuple(_frozen(b, s[:1], f"layer{i + 1}.bias") for i, (b, s) in enumerate(zip(self.biases, shapes)))
        gs = tuple(_frozen(g, s[:1], f"layer{i + 1}.gain") for i, (g, s) in enumerate(zip(self.gains, shapes)))
        os_ = tuple(_frozen(o, s[:1], f"layer{i + 1}.offset") for i, (o, s) in enumerate(zip(self.offsets, shapes)))
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)
        object.__setattr__(self, "gains", gs)
        object.__setattr__(self, "offsets", os_)

    def arrays(self) -> list[tuple[str, np.ndarray]]:
        """Named parameter arrays in flatten order."""
        out = []
        for name, ell, _ in self.arch.param_layout():
            kind = name.rsplit(".", 1)[1]
            source = {"weight": self.weights, "bias": self.biases,
                      "gain": self.gains, "offset": self.offsets}[kind]
            out.append((name, source[ell - 1]))
        return out

    def is_finite(self) -> bool:
        return all(np.isfinite(a).all() for _, a in self.arrays())

    def equals(self, other: "ModelWeights") -> bool:
        """Bit-exact equality of architecture and every parameter."""
        if self.arch != other.arch:
            return False
        return np.array_equal(flatten(self).view(np.uint32), flatten(other).view(np.uint32))


def flatten(weights: ModelWeights) -> np.ndarray:
    return np.concatenate([a.ravel() for _, a in weights.arrays()]).astype(DTYPE, copy=False)


def unflatten(vector, arch: Architecture) -> ModelWeights:
    vector = np.asarray(vector)
    if vector.ndim != 1 or vector.shape[0] != arch.num_params:
        raise DimensionError(f"expected a vector of length {arch.num_params}, got shape {vector.shape}")
    vector = vector.astype(DTYPE, copy=False)
    parts = {"weight": [], "bias": [], "gain": [], "offset": []}
    pos = 0
    for name, _, shape in arch.param_layout():
        size = int(np.prod(shape))
        parts[name.rsplit(".", 1)[1]].append(vector[pos:pos + size].reshape(shape))
        pos += size
    return ModelWeights(arch, tuple(parts["weight"]), tuple(parts["bias"]),
                        tuple(parts["gain"]), tuple(parts["offset"]))


def layer_index_vector(arch: Architecture) -> np.ndarray:
    """Layer number (1-based) of every flattened coordinate."""
    return np.concatenate([np.full(int(np.prod(shape)), ell, dtype=np.int32)
                           for _, ell, shape in arch.param_layout()])


def _check_forward(weights: ModelWeights, inputs) -> np.ndarray:
    x = np.asarray(inputs, dtype=DTYPE)
    if x.ndim != 2 or x.shape[1] != weights.arch.input_dim:
        raise DimensionError(f"inputs must have shape (batch, {weights.arch.input_dim}), got {x.shape}")
    if not weights.is_finite():
        raise ValidationError("weights contain non-finite values")
    return x


def layer_norm(h: np.ndarray, gain: np.ndarray, offset: np.ndarray) -> np.ndarray:
    mu = h.mean(axis=1, keepdims=True)
    var = ((h - mu) ** 2).mean(axis=1, keepdims=True)
    return (h - mu) / np.sqrt(var + LN_EPS) * gain + offset


def _forward(weights: ModelWeights, x: np.ndarray, keep_hidden: bool):
    # Sums over hidden units run in float64 so the result does not depend on
    # unit order beyond the final float32 rounding.
    hidden = []
    h = x.astype(np.float64)
    arch = weights.arch
    f64 = lambda a: a.astype(np.float64)
    for ell in range(arch.depth):
        z = h @ f64(weights.weights[ell]).T + f64(weights.biases[ell])
        if ell == arch.depth - 1:
            return z.astype(DTYPE), hidden
        if arch.layernorm:
            z = layer_norm(z, f64(weights.gains[ell]), f64(weights.offsets[ell]))
        h = np.maximum(z, 0.0)
        if keep_hidden:
            hidden.append(h.astype(DTYPE))


def forward(weights: ModelWeights, inputs) -> np.ndarray:
    """Logits for a batch of inputs, shape (batch, num_classes)."""
    logits, _ = _forward(weights, _check_forward(weights, inputs), keep_hidden=False)
    return logits


def hidden_outputs(weights: ModelWeights, inputs) -> list[np.ndarray]:
    """Post-ReLU outputs of every hidden layer, first hidden layer first."""
    _, hidden = _forward(weights, _check_forward(weights, inputs), keep_hidden=True)
    return hidden


@dataclass(frozen=True, eq=False)
class PermutationSet:
    """One permutation per hidden layer.

    ``perms[l][i] = j`` means unit ``i`` of the permuted model is unit ``j``
    of the original, i.e. the permutation matrix ``P_l`` has ``P[i, j] = 1``.
    """

    perms: tuple

    def __post_init__(self):
        checked = []
        for ell, p in enumerate(self.perms, start=1):
            arr = np.array(p, dtype=np.int64, copy=True)
            if arr.ndim != 1 or not np.array_equal(np.sort(arr), np.arange(arr.size)):
                raise ValidationError(f"layer {ell} entry is not a permutation of 0..{arr.size - 1}")
            arr.setflags(write=False)
            checked.append(arr)
        object.__setattr__(self, "perms", tuple(checked))

    @classmethod
    def identity(cls, arch: Architecture) -> "PermutationSet":
        return cls(tuple(np.arange(arch.hidden_width) for _ in range(arch.num_hidden)))

    def inverse(self) -> "PermutationSet":
        return PermutationSet(tuple(np.argsort(p) for p in self.perms))

    def then(self, other: "PermutationSet") -> "PermutationSet":
        """The set equivalent to applying ``self`` first and ``other`` second."""
        if len(self.perms) != len(other.perms):
            raise DimensionError("permutation sets cover different numbers of layers")
        return PermutationSet(tuple(p[q] for p, q in zip(self.perms, other.perms)))

    def replace(self, layer: int, perm) -> "PermutationSet":
        """Copy with the 1-based ``layer`` entry swapped for ``perm``."""
        perms = list(self.perms)
        perms[layer - 1] = perm
        return PermutationSet(tuple(perms))

    def __eq__(self, other):
        if not isinstance(other, PermutationSet) or len(self.perms) != len(other.perms):
            return NotImplemented if not isinstance(other, PermutationSet) else False
        return all(np.array_equal(p, q) for p, q in zip(self.perms, other.perms))

    def __hash__(self):
        return hash(tuple(p.tobytes() for p in self.perms))

    def is_identity(self) -> bool:
        return all(np.array_equal(p, np.arange(p.size)) for p in self.perms)


def check_permutation(arch: Architecture, pi: PermutationSet) -> None:
    if len(pi.perms) != arch.num_hidden:
        raise DimensionError(f"need {arch.num_hidden} permutations, got {len(pi.perms)}")
    for ell, p in enumerate(pi.perms, start=1):
        if p.size != arch.hidden_width:
            raise DimensionError(f"layer {ell} permutation has size {p.size}, hidden width is {arch.hidden_width}")


def apply_permutation(weights: ModelWeights, pi: PermutationSet) -> ModelWeights:
    """Permute hidden units: ``W_l <- P_l W_l P_{l-1}^T``, biases and norm parameters by ``P_l``."""
    arch = weights.arch
    check_permutation(arch, pi)
    perms: list[Optional[np.ndarray]] = [None, *pi.perms, None]
    new_w, new_b = [], []
    for ell in range(1, arch.depth + 1):
        w, b = weights.weights[ell - 1], weights.biases[ell - 1]
        rows, cols = perms[ell], perms[ell - 1]
        if rows is not None:
            w, b = w[rows], b[rows]
        if cols is not None:
            w = w[:, cols]
        new_w.append(w)
        new_b.append(b)
    gains = tuple(g[p] for g, p in zip(weights.gains, pi.perms))
    offsets = tuple(o[p] for o, p in zip(weights.offsets, pi.perms))
    return ModelWeights(arch, tuple(new_w), tuple(new_b), gains, offsets)


def same_arch(*models: ModelWeights) -> Architecture:
    arch = models[0].arch
    for m in models[1:]:
        if m.arch != arch:
            raise DimensionError(f"architectures differ: {arch} vs {m.arch}")
    return arch


def zeros_like_arch(arch: Architecture) -> ModelWeights:
    return unflatten(np.zeros(arch.num_params, dtype=DTYPE), arch)


__all__: Sequence[str] = [
    "Architecture", "ModelWeights", "PermutationSet", "flatten", "unflatten",
    "forward", "hidden_outputs", "apply_permutation", "layer_index_vector",
    "same_arch", "check_permutation", "zeros_like_arch", "LN_EPS",
]
