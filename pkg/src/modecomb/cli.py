"""Command-line entry point.

Every subcommand is a thin wrapper over library calls: read a config and
weight archives, run one experiment, write weights, a permutation file or a
CSV table.  Exit status is 0 on success, 1 for bad input (usage, config,
file format, shape mismatches) and 2 for failures while running.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from . import report
from .align import weight_match
from .archive import (config_digest, load_permutation, load_weights, save_permutation,
                      save_weights)
from .combine import DETERMINISTIC, SamplerSpec, combine_elementwise, min_max_vertex, sample_coefficients
from .config import ExperimentConfig, load_config
from .errors import DivergenceError, ValidationError
from .evaluation import (SWEEP_FAMILIES, agreement_analysis, default_grid, edge_lengths,
                         empirical_barrier, evaluate_both, perturbation_sweep, predictions, run_sweep,
                         triangle_heatmap, width_ablation, EvalMetrics, SPLITS)
from .nets import apply_permutation
from .training import make_dataset, train_model

COMMANDS = ("train", "align", "sweep", "stitch", "minmax", "extrapolate", "triangle",
            "perturb", "agreement", "edges", "widths", "report")


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _need(args, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError(f"{args.command} requires {', '.join(missing)}")


def _config(args) -> ExperimentConfig:
    _need(args, "config")
    return load_config(args.config)


def _pair(args):
    """Models A and B, with B permuted when ``--permutation`` is given."""
    _need(args, "model_a", "model_b")
    a, b = load_weights(args.model_a), load_weights(args.model_b)
    if args.permutation is not None:
        b = apply_permutation(b, load_permutation(args.permutation))
    return a, b


def _cmd_train(args):
    cfg = _config(args)
    _need(args, "out")
    data = make_dataset(cfg.dataset)
    theta = train_model(cfg.arch, data, cfg.training)
    meta = {"seed": cfg.training.seed, "dataset_seed": cfg.dataset.seed,
            "training_config_digest": config_digest(cfg.training)}
    save_weights(theta, args.out, meta)
    acc = {s: m.accuracy for s, m in evaluate_both(theta, data).items()}
    print(f"trained {cfg.arch.num_params} parameters: train acc {acc['train']:.4f}, test acc {acc['test']:.4f}")


def _cmd_align(args):
    _need(args, "out")
    a, b = _pair(args)
    seed, max_iters = 0, 100
    if args.config is not None:
        e = load_config(args.config).experiment
        seed, max_iters = e.align_seed, e.max_iters
    res = weight_match(a, b, seed=seed, max_iters=max_iters)
    save_permutation(res.pi, args.out)
    for i, obj in enumerate(res.objective_trace):
        print(f"update {i} objective {obj!r}")
    print(f"converged {res.converged} after {res.iterations} passes")


def _sweep(args, family):
    cfg = _config(args)
    _need(args, "results")
    a, b = _pair(args)
    e = cfg.experiment
    result = run_sweep(a, b, family, make_dataset(cfg.dataset), e.grid_size, e.samples_per_point, e.seed)
    report.emit_results(result, args.results)
    rep = result.barrier("test")
    print(f"{family}: test loss barrier {rep.empirical_loss_barrier:.6f}, "
          f"accuracy barrier {rep.empirical_accuracy_barrier:.6f}")


def _cmd_sweep(args):
    family = args.scheme if args.scheme is not None else _config(args).experiment.scheme
    if family not in SWEEP_FAMILIES:
        raise UsageError(f"unknown scheme {family!r}; expected one of {', '.join(SWEEP_FAMILIES)}")
    _sweep(args, family)


def _cmd_triangle(args):
    cfg = _config(args)
    _need(args, "model_c", "results")
    a, b = _pair(args)
    c = load_weights(args.model_c)
    if args.permutation_c is not None:
        c = apply_permutation(c, load_permutation(args.permutation_c))
    result = triangle_heatmap(a, b, c, cfg.experiment.resolution, make_dataset(cfg.dataset))
    report.emit_results(result, args.results)
    best = result.best
    print(f"best test accuracy {best.test.accuracy:.4f} at lambda_b={best.lambda_b!r}, lambda_c={best.lambda_c!r}")


def _cmd_perturb(args):
    cfg = _config(args)
    _need(args, "results")
    a, b = _pair(args)
    e = cfg.experiment
    width = cfg.arch.hidden_width
    ks = list(e.k_values) if e.k_values is not None else sorted({2, max(2, width // 4), max(2, width // 2), width})
    data = make_dataset(cfg.dataset)
    res = weight_match(a, b, seed=e.align_seed, max_iters=e.max_iters)
    out = perturbation_sweep(a, b, res, e.layer, ks, data, seed=e.seed, grid_size=e.grid_size,
                             probe_size=e.probe_size)
    report.write_text(report.to_csv(report.PERTURB_HEADER, report.perturbation_rows(e.layer, out)),
                      args.results)
    for p in out:
        print(f"layer {e.layer} k={p.k}: accuracy barrier {p.report.empirical_accuracy_barrier:.6f}")


def _cmd_agreement(args):
    cfg = _config(args)
    _need(args, "results")
    a, b = _pair(args)
    data = make_dataset(cfg.dataset)
    e = cfg.experiment
    y = data.test.labels
    pa, pb = predictions(a, data), predictions(b, data)
    entries = []
    if e.scheme == "minmax":
        for mode in ("min", "max"):
            m = combine_elementwise(a, b, min_max_vertex(a, b, mode))
            entries.append((mode, 0.0 if mode == "min" else 1.0, 0,
                            agreement_analysis(pa, pb, predictions(m, data), y)))
    else:
        spp = 1 if e.scheme in DETERMINISTIC else (e.samples_per_point or 8)
        for i, p in enumerate(default_grid(e.scheme, e.grid_size, cfg.arch.depth)):
            for j in range(spp):
                v = sample_coefficients(SamplerSpec(e.scheme, p, e.seed), a.arch, i * spp + j).v
                m = combine_elementwise(a, b, v)
                entries.append((e.scheme, float(p), j, agreement_analysis(pa, pb, predictions(m, data), y)))
    report.write_text(report.to_csv(report.AGREEMENT_HEADER, report.agreement_rows(entries)), args.results)
    print(f"{len(entries)} combined models bucketed over {len(y)} test points")


def _cmd_edges(args):
    _need(args, "results")
    a, b = _pair(args)
    bins = 50
    if args.config is not None:
        bins = load_config(args.config).experiment.num_bins
    hist = edge_lengths(a, b, bins)
    report.emit_results(hist, args.results)
    print(f"{int(hist.counts.sum())} edges, longest {float(hist.edges[-1])!r}")


def _cmd_widths(args):
    cfg = _config(args)
    _need(args, "results")
    e = cfg.experiment
    schemes = [args.scheme or e.scheme]
    rows = width_ablation(e.width_multipliers, schemes, make_dataset(cfg.dataset), e.seed_pairs,
                          cfg.training, depth=cfg.arch.depth, layernorm=cfg.arch.layernorm,
                          grid_size=e.grid_size, samples_per_point=e.samples_per_point,
                          align_seed=e.align_seed)
    report.emit_results(rows, args.results)
    for r in rows:
        print(f"x{r.multiplier} pair {r.pair} {r.scheme}: accuracy barrier {r.accuracy_barrier:.6f}")


def _cmd_report(args):
    """Barrier table from one or more sweep CSVs, with endpoints evaluated from the models."""
    cfg = _config(args)
    _need(args, "results")
    if not args.input:
        raise UsageError("report requires at least one --input sweep table")
    a, b = _pair(args)
    data = make_dataset(cfg.dataset)
    ends = [evaluate_both(a, data), evaluate_both(b, data)]
    entries = []
    for path in args.input:
        rows = report.read_sweep_csv(path)
        schemes = sorted({r["scheme"] for r in rows})
        for scheme in schemes:
            for split in SPLITS:
                sel = [r for r in rows if r["scheme"] == scheme and r["split"] == split]
                if not sel:
                    continue
                samples = [EvalMetrics(r["loss"], r["accuracy"], split, 0, 0) for r in sel]
                keys = [(r["param"], r["sample_index"]) for r in sel]
                entries.append((scheme, empirical_barrier([ends[0][split], ends[1][split]], samples, keys)))
    report.write_text(report.to_csv(report.BARRIER_HEADER, report.barrier_rows(entries)), args.results)
    for label, rep in entries:
        print(f"{label} {rep.split}: loss barrier {rep.empirical_loss_barrier:.6f}, "
              f"accuracy barrier {rep.empirical_accuracy_barrier:.6f}")


HANDLERS = {
    "train": _cmd_train,
    "align": _cmd_align,
    "sweep": _cmd_sweep,
    "stitch": lambda args: _sweep(args, "stitch"),
    "minmax": lambda args: _sweep(args, "minmax"),
    "extrapolate": lambda args: _sweep(args, "extrapolate"),
    "triangle": _cmd_triangle,
    "perturb": _cmd_perturb,
    "agreement": _cmd_agreement,
    "edges": _cmd_edges,
    "widths": _cmd_widths,
    "report": _cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="modecomb", description="Weight alignment and mode-combination experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser, metavar="COMMAND")
    for name in COMMANDS:
        p = sub.add_parser(name, help=(HANDLERS[name].__doc__ or "").strip().split("\n")[0] or None)
        p.add_argument("--config", metavar="PATH")
        p.add_argument("--model-a", metavar="PATH")
        p.add_argument("--model-b", metavar="PATH")
        p.add_argument("--model-c", metavar="PATH")
        p.add_argument("--permutation", metavar="PATH", help="permutation file applied to model B")
        p.add_argument("--permutation-c", metavar="PATH", help="permutation file applied to model C")
        p.add_argument("--out", metavar="PATH")
        p.add_argument("--results", metavar="PATH")
        p.add_argument("--scheme", metavar="NAME")
        p.add_argument("--input", metavar="PATH", action="append", help="sweep table (report only)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        HANDLERS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DivergenceError, OSError, RuntimeError, ArithmeticError, MemoryError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
