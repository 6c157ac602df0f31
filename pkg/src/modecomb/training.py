"""Synthetic classification data and a mini-batch SGD trainer.

The data is a Gaussian mixture: one seed-derived unit direction per class,
scaled by ``class_separation``, plus isotropic noise.  Training is plain
cross-entropy with momentum SGD and L2 weight decay on weight matrices,
using either a step schedule (divide by 10 at one and two thirds of
training) or a linear-warmup cosine schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .errors import DivergenceError, ValidationError
from .nets import DTYPE, LN_EPS, Architecture, ModelWeights, same_arch

WARMUP_START_LR = 1e-6


@dataclass(frozen=True)
class DatasetSpec:
    seed: int
    num_classes: int = 10
    input_dim: int = 32
    train_size: int = 2000
    test_size: int = 5000
    class_separation: float = 3.0
    noise_sigma: float = 1.0

    def __post_init__(self):
        for name in ("num_classes", "input_dim", "train_size", "test_size"):
            value = getattr(self, name)
            if value < 1:
                raise ValidationError(f"{name} must be positive, got {value}")
        if self.train_size < self.num_classes or self.test_size < self.num_classes:
            raise ValidationError("train_size and test_size must be at least num_classes")
        if self.class_separation < 0 or self.noise_sigma < 0:
            raise ValidationError("class_separation and noise_sigma must be nonnegative")


@dataclass(frozen=True, eq=False)
class Split:
    inputs: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return int(self.labels.shape[0])


@dataclass(frozen=True, eq=False)
class Dataset:
    spec: DatasetSpec
    centers: np.ndarray
    train: Split
    test: Split

    def split(self, name: str) -> Split:
        if name == "train":
            return self.train
        if name == "test":
            return self.test
        raise ValidationError(f"unknown split {name!r}")


def _balanced_labels(rng: np.random.Generator, n: int, num_classes: int) -> np.ndarray:
    labels = np.arange(n, dtype=np.int64) % num_classes
    return rng.permutation(labels)


def make_dataset(spec: DatasetSpec) -> Dataset:
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0xDA7A]))
    directions = rng.standard_normal((spec.num_classes, spec.input_dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    centers = (directions * spec.class_separation).astype(DTYPE)

    def draw(n):
        labels = _balanced_labels(rng, n, spec.num_classes)
        noise = rng.standard_normal((n, spec.input_dim)) * spec.noise_sigma
        x = (centers[labels] + noise).astype(DTYPE)
        x.setflags(write=False)
        labels.setflags(write=False)
        return Split(x, labels)

    train = draw(spec.train_size)
    test = draw(spec.test_size)
    centers.setflags(write=False)
    return Dataset(spec, centers, train, test)


def init_params(arch: Architecture, seed: int) -> ModelWeights:
    """Fan-in scaled uniform init, ``U(-1/sqrt(in), 1/sqrt(in))`` for weights and biases."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x1A17]))
    weights, biases = [], []
    for out, inp in arch.layer_shapes():
        bound = math.sqrt(1.0 / inp)
        weights.append(rng.uniform(-bound, bound, size=(out, inp)))
        biases.append(rng.uniform(-bound, bound, size=out))
    if arch.layernorm:
        h = arch.hidden_width
        gains = tuple(np.ones(h) for _ in range(arch.num_hidden))
        offsets = tuple(np.zeros(h) for _ in range(arch.num_hidden))
    else:
        gains = offsets = ()
    return ModelWeights(arch, tuple(weights), tuple(biases), gains, offsets)


@dataclass(frozen=True)
class StepThirds:
    initial_lr: float = 0.01

    def __post_init__(self):
        if not self.initial_lr > 0:
            raise ValidationError("initial_lr must be positive")


@dataclass(frozen=True)
class CosineWarmup:
    peak_lr: float = 0.15
    warmup_epochs: float = 1.0

    def __post_init__(self):
        if not self.peak_lr > 0:
            raise ValidationError("peak_lr must be positive")
        if self.warmup_epochs < 0:
            raise ValidationError("warmup_epochs must be nonnegative")


Schedule = Union[StepThirds, CosineWarmup]


def lr_at(schedule: Schedule, epoch: int, step_in_epoch: int, steps_per_epoch: int, epochs: int) -> float:
    """Learning rate for one optimizer step.

    ``epoch`` and ``step_in_epoch`` are 0-based.  The cosine schedule reaches
    exactly zero on the very last step of training.
    """
    if not (0 <= epoch < epochs and 0 <= step_in_epoch < steps_per_epoch):
        raise ValidationError(f"step ({epoch}, {step_in_epoch}) outside {epochs} epochs x {steps_per_epoch} steps")
    if isinstance(schedule, StepThirds):
        # integer arithmetic keeps the boundaries at exact thirds
        drops = min((3 * epoch) // epochs, 2)
        return schedule.initial_lr * 10.0 ** (-drops)
    if isinstance(schedule, CosineWarmup):
        total = epochs * steps_per_epoch
        t = epoch * steps_per_epoch + step_in_epoch
        warm = min(int(round(schedule.warmup_epochs * steps_per_epoch)), total - 1)
        if t < warm:
            return WARMUP_START_LR + (schedule.peak_lr - WARMUP_START_LR) * t / warm
        span = total - 1 - warm
        if span <= 0:
            return schedule.peak_lr
        return schedule.peak_lr * 0.5 * (1.0 + math.cos(math.pi * (t - warm) / span))
    raise ValidationError(f"unknown schedule {schedule!r}")


@dataclass(frozen=True)
class TrainConfig:
    seed: int
    epochs: int = 50
    batch_size: int = 100
    momentum: float = 0.9
    weight_decay: float = 1e-4
    schedule: Schedule = field(default_factory=CosineWarmup)

    def __post_init__(self):
        if self.epochs < 0:
            raise ValidationError("epochs must be nonnegative")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be positive")
        if not 0 <= self.momentum < 1:
            raise ValidationError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValidationError("weight_decay must be nonnegative")


def _loss_and_grads(params, arch: Architecture, x, y):
    """Mean cross-entropy of a batch and its gradient for every parameter array."""
    ws, bs, gs, os_ = params
    depth = arch.depth
    cache = []
    h = x
    for ell in range(depth - 1):
        z = h @ ws[ell].T + bs[ell]
        if arch.layernorm:
            mu = z.mean(axis=1, keepdims=True)
            inv = 1.0 / np.sqrt(((z - mu) ** 2).mean(axis=1, keepdims=True) + DTYPE(LN_EPS))
            zhat = (z - mu) * inv
            pre = zhat * gs[ell] + os_[ell]
        else:
            inv = zhat = None
            pre = z
        a = np.maximum(pre, DTYPE(0))
        cache.append((h, pre, zhat, inv))
        h = a
    logits = h @ ws[-1].T + bs[-1]

    shifted = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logsum
    n = x.shape[0]
    loss = -float(logp[np.arange(n), y].astype(np.float64).mean())

    d = np.exp(logp)
    d[np.arange(n), y] -= 1.0
    d /= DTYPE(n)

    g_w = [None] * depth
    g_b = [None] * depth
    g_g = [None] * (depth - 1) if arch.layernorm else []
    g_o = [None] * (depth - 1) if arch.layernorm else []
    g_w[-1] = d.T @ h
    g_b[-1] = d.sum(axis=0)
    dh = d @ ws[-1]
    for ell in range(depth - 2, -1, -1):
        h_in, pre, zhat, inv = cache[ell]
        dpre = dh * (pre > 0)
        if arch.layernorm:
            g_g[ell] = (dpre * zhat).sum(axis=0)
            g_o[ell] = dpre.sum(axis=0)
            dzhat = dpre * gs[ell]
            dz = inv * (dzhat - dzhat.mean(axis=1, keepdims=True)
                        - zhat * (dzhat * zhat).mean(axis=1, keepdims=True))
        else:
            dz = dpre
        g_w[ell] = dz.T @ h_in
        g_b[ell] = dz.sum(axis=0)
        if ell > 0:
            dh = dz @ ws[ell]
    return loss, (g_w, g_b, g_g, g_o)


def train(init: ModelWeights, data: Dataset, cfg: TrainConfig,
          on_epoch: Optional[Callable[[int, float], None]] = None) -> ModelWeights:
    """Train with mini-batch momentum SGD; deterministic in ``cfg.seed``.

    ``on_epoch(epoch, mean_loss)`` is called after every epoch.
    """
    arch = init.arch
    if data.train.inputs.shape[1] != arch.input_dim or data.spec.num_classes != arch.num_classes:
        raise ValidationError("dataset dimensions do not match the architecture")
    if cfg.epochs == 0:
        return init

    params = (
        [w.copy() for w in init.weights],
        [b.copy() for b in init.biases],
        [g.copy() for g in init.gains],
        [o.copy() for o in init.offsets],
    )
    momenta = tuple([np.zeros_like(a) for a in group] for group in params)
    decay = DTYPE(cfg.weight_decay)
    mom = DTYPE(cfg.momentum)

    x_all, y_all = data.train.inputs, data.train.labels
    n = len(data.train)
    steps = math.ceil(n / cfg.batch_size)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xBA7C]))

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for step in range(steps):
            idx = order[step * cfg.batch_size:(step + 1) * cfg.batch_size]
            with np.errstate(over="ignore", invalid="ignore"):
                loss, grads = _loss_and_grads(params, arch, x_all[idx], y_all[idx])
            if not math.isfinite(loss):
                raise DivergenceError(epoch, loss)
            total += loss * idx.size
            lr = DTYPE(lr_at(cfg.schedule, epoch, step, steps, cfg.epochs))
            for group_i, (group, grad_group, buf_group) in enumerate(zip(params, grads, momenta)):
                for p, g, buf in zip(group, grad_group, buf_group):
                    if group_i == 0 and decay:
                        g = g + decay * p
                    buf *= mom
                    buf += g
                    p -= lr * buf
        mean_loss = total / n
        if not math.isfinite(mean_loss):
            raise DivergenceError(epoch, mean_loss)
        if on_epoch is not None:
            on_epoch(epoch, mean_loss)

    ws, bs, gs, os_ = params
    return ModelWeights(arch, tuple(ws), tuple(bs), tuple(gs), tuple(os_))


def train_model(arch: Architecture, data: Dataset, cfg: TrainConfig) -> ModelWeights:
    """Initialize from ``cfg.seed`` and train; the usual way to get an independent model."""
    return train(init_params(arch, cfg.seed), data, cfg)


def default_arch(spec: DatasetSpec, width_multiplier: int = 1, depth: int = 4,
                 layernorm: bool = True) -> Architecture:
    return Architecture(input_dim=spec.input_dim, num_classes=spec.num_classes, depth=depth,
                        width_multiplier=width_multiplier, layernorm=layernorm)


def check_compatible(data: Dataset, *models: ModelWeights) -> None:
    arch = same_arch(*models)
    if arch.input_dim != data.spec.input_dim or arch.num_classes != data.spec.num_classes:
        raise ValidationError("dataset dimensions do not match the architecture")
