"""Experiment configuration files.

Configs are INI-style text with four sections::

    [dataset]       seed (required), num_classes, input_dim, train_size,
                    test_size, class_separation, noise_sigma
    [arch]          depth, base_width, width_multiplier, layernorm
    [training]      seed (required), epochs, batch_size, momentum,
                    weight_decay, schedule (cosine_warmup | step_thirds),
                    lr, warmup_epochs
    [experiment]    scheme, grid_size, samples_per_point, seed, align_seed,
                    max_iters, width_multipliers, pair_seeds, layer,
                    k_values, probe_size, num_bins, resolution

Lists are comma separated.  Unknown sections or keys, duplicates and
out-of-range values raise ``ConfigError`` naming the line.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .errors import ConfigError, ValidationError
from .evaluation import SWEEP_FAMILIES
from .nets import Architecture
from .training import CosineWarmup, DatasetSpec, StepThirds, TrainConfig

REQUIRED = object()


def _bool(text):
    low = text.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_list(text):
    items = [t.strip() for t in text.split(",") if t.strip()]
    return [int(t) for t in items]


def _positive(x):
    return x > 0


def _nonneg(x):
    return x >= 0


# key -> (parser, default, check, description of the valid range)
Field = tuple[Callable[[str], Any], Any, Optional[Callable[[Any], bool]], str]

SCHEMA: dict[str, dict[str, Field]] = {
    "dataset": {
        "seed": (int, REQUIRED, None, ""),
        "num_classes": (int, 10, _positive, "a positive integer"),
        "input_dim": (int, 32, _positive, "a positive integer"),
        "train_size": (int, 2000, _positive, "a positive integer"),
        "test_size": (int, 5000, _positive, "a positive integer"),
        "class_separation": (float, 3.0, _nonneg, "nonnegative"),
        "noise_sigma": (float, 1.0, _nonneg, "nonnegative"),
    },
    "arch": {
        "depth": (int, 4, lambda x: x >= 2, "an integer >= 2"),
        "base_width": (int, 16, _positive, "a positive integer"),
        "width_multiplier": (int, 16, _positive, "a positive integer"),
        "layernorm": (_bool, True, None, ""),
    },
    "training": {
        "seed": (int, REQUIRED, None, ""),
        "epochs": (int, 50, _nonneg, "a nonnegative integer"),
        "batch_size": (int, 100, _positive, "a positive integer"),
        "momentum": (float, 0.9, lambda x: 0 <= x < 1, "in [0, 1)"),
        "weight_decay": (float, 1e-4, _nonneg, "nonnegative"),
        "schedule": (str, "cosine_warmup", lambda x: x in ("cosine_warmup", "step_thirds"),
                     "cosine_warmup or step_thirds"),
        "lr": (float, None, _positive, "positive"),
        "warmup_epochs": (float, 1.0, _nonneg, "nonnegative"),
    },
    "experiment": {
        "scheme": (str, "scalar", lambda x: x in SWEEP_FAMILIES, f"one of {', '.join(SWEEP_FAMILIES)}"),
        "grid_size": (int, 25, _positive, "a positive integer"),
        "samples_per_point": (int, None, _positive, "a positive integer"),
        "seed": (int, 0, None, ""),
        "align_seed": (int, 0, None, ""),
        "max_iters": (int, 100, _positive, "a positive integer"),
        "width_multipliers": (_int_list, [1, 2, 4, 8, 16], lambda x: len(x) > 0 and all(v > 0 for v in x),
                              "a nonempty list of positive integers"),
        "pair_seeds": (_int_list, [1, 2], lambda x: len(x) >= 2 and len(x) % 2 == 0,
                       "an even-length list of seeds (consecutive pairs)"),
        "layer": (int, 1, _positive, "a positive integer"),
        "k_values": (_int_list, None, lambda x: all(v >= 2 for v in x), "a list of integers >= 2"),
        "probe_size": (int, 2048, lambda x: x >= 2, "an integer >= 2"),
        "num_bins": (int, 50, _positive, "a positive integer"),
        "resolution": (int, 11, lambda x: x >= 2, "an integer >= 2"),
    },
}

DEFAULT_LR = {"cosine_warmup": 0.15, "step_thirds": 0.01}


@dataclass(frozen=True)
class ExperimentSettings:
    scheme: str = "scalar"
    grid_size: int = 25
    samples_per_point: Optional[int] = None
    seed: int = 0
    align_seed: int = 0
    max_iters: int = 100
    width_multipliers: tuple = (1, 2, 4, 8, 16)
    pair_seeds: tuple = (1, 2)
    layer: int = 1
    k_values: Optional[tuple] = None
    probe_size: int = 2048
    num_bins: int = 50
    resolution: int = 11

    @property
    def seed_pairs(self) -> list[tuple[int, int]]:
        s = self.pair_seeds
        return [(s[i], s[i + 1]) for i in range(0, len(s), 2)]


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec
    arch: Architecture
    training: TrainConfig
    experiment: ExperimentSettings = field(default_factory=ExperimentSettings)


_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^([^\s=:#;][^=:]*?)\s*[=:]")


def _line_index(text: str) -> dict:
    """(section, key) -> 1-based line number, plus (section, None) for headers."""
    index = {}
    section = None
    for n, line in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip()
            index.setdefault((section, None), n)
            continue
        m = _KEY_RE.match(line)
        if m and section is not None:
            index.setdefault((section, m.group(1).strip().lower()), n)
    return index


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(strict=True, interpolation=None, default_section="\0none")
    try:
        parser.read_string(text)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r} in [{exc.section}]", exc.lineno) from exc
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", exc.lineno) from exc
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside of any [section]", exc.lineno) from exc
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigError("unparseable line", line) from exc
    lines = _line_index(text)

    values: dict[str, dict[str, Any]] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", lines.get((section, None)))
    for section, fields in SCHEMA.items():
        given = parser[section] if parser.has_section(section) else {}
        for key in given:
            if key not in fields:
                raise ConfigError(f"unknown key {key!r} in [{section}]", lines.get((section, key)))
        out = {}
        for key, (parse, default, check, allowed) in fields.items():
            line = lines.get((section, key))
            if key not in given:
                if default is REQUIRED:
                    raise ConfigError(f"missing required key {key!r} in [{section}]",
                                      lines.get((section, None)))
                out[key] = default
                continue
            raw = given[key]
            try:
                value = parse(raw)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}", line) from exc
            if check is not None and not check(value):
                raise ConfigError(f"[{section}] {key} = {raw!r} is out of range; must be {allowed}", line)
            out[key] = value
        values[section] = out
    try:
        return _build(values)
    except ConfigError:
        raise
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def _build(values: dict) -> ExperimentConfig:
    ds = DatasetSpec(**values["dataset"])
    a = values["arch"]
    arch = Architecture(input_dim=ds.input_dim, num_classes=ds.num_classes, depth=a["depth"],
                        base_width=a["base_width"], width_multiplier=a["width_multiplier"],
                        layernorm=a["layernorm"])
    t = dict(values["training"])
    kind, lr, warm = t.pop("schedule"), t.pop("lr"), t.pop("warmup_epochs")
    lr = DEFAULT_LR[kind] if lr is None else lr
    schedule = CosineWarmup(lr, warm) if kind == "cosine_warmup" else StepThirds(lr)
    training = TrainConfig(schedule=schedule, **t)
    e = dict(values["experiment"])
    for key in ("width_multipliers", "pair_seeds", "k_values"):
        if e[key] is not None:
            e[key] = tuple(e[key])
    if e["layer"] > arch.num_hidden:
        raise ConfigError(f"[experiment] layer must be at most {arch.num_hidden}")
    return ExperimentConfig(ds, arch, training, ExperimentSettings(**e))


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
