"""Plot-ready CSV output.

Every table has a fixed header row and deterministic row order; floats are
written with ``repr`` so re-emitting identical results gives identical bytes.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Sequence

from .errors import ValidationError
from .evaluation import (AgreementCounts, BarrierReport, Histogram, PerturbationResult, SweepResult,
                         TriangleResult, WidthRow, SPLITS)

SWEEP_HEADER = ["scheme", "param", "sample_index", "split", "loss", "accuracy"]
HEATMAP_HEADER = ["lambda_b", "lambda_c", "split", "loss", "accuracy"]
BARRIER_HEADER = ["label", "split", "loss_barrier", "accuracy_barrier", "worst_loss_sample", "worst_accuracy_sample"]
AGREEMENT_FIELDS = list(AgreementCounts.__dataclass_fields__)
AGREEMENT_HEADER = ["scheme", "param", "sample_index", *AGREEMENT_FIELDS]
HISTOGRAM_HEADER = ["bin_left", "bin_right", "count"]
WIDTH_HEADER = ["multiplier", "pair", "scheme", "loss_barrier", "accuracy_barrier"]
PERTURB_HEADER = ["layer", "k", "split", "loss_barrier", "accuracy_barrier"]


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, tuple):
        return ":".join(_fmt(v) for v in x)
    return str(x)


def sweep_rows(result: SweepResult) -> list[list]:
    rows = []
    for r in result.records:
        for split in SPLITS:
            m = r.metrics(split)
            rows.append([result.scheme, r.param, r.sample_index, split, m.loss, m.accuracy])
    return rows


def heatmap_rows(result: TriangleResult) -> list[list]:
    rows = []
    for p in result.points:
        for split in SPLITS:
            m = p.train if split == "train" else p.test
            rows.append([p.lambda_b, p.lambda_c, split, m.loss, m.accuracy])
    return rows


def barrier_rows(reports: Sequence[tuple[str, BarrierReport]]) -> list[list]:
    return [[label, r.split, r.empirical_loss_barrier, r.empirical_accuracy_barrier,
             r.worst_loss_sample, r.worst_accuracy_sample] for label, r in reports]


def agreement_rows(entries: Sequence[tuple[str, float, int, AgreementCounts]]) -> list[list]:
    return [[scheme, param, idx, *(getattr(c, f) for f in AGREEMENT_FIELDS)]
            for scheme, param, idx, c in entries]


def histogram_rows(hist: Histogram) -> list[list]:
    e = hist.edges
    return [[float(e[i]), float(e[i + 1]), int(c)] for i, c in enumerate(hist.counts)]


def width_rows(rows: Sequence[WidthRow]) -> list[list]:
    return [[r.multiplier, r.pair, r.scheme, r.loss_barrier, r.accuracy_barrier] for r in rows]


def perturbation_rows(layer: int, results: Sequence[PerturbationResult]) -> list[list]:
    return [[layer, p.k, p.report.split, p.report.empirical_loss_barrier, p.report.empirical_accuracy_barrier]
            for p in results]


def to_csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def render(result) -> str:
    """CSV text for any supported result object."""
    if isinstance(result, SweepResult):
        return to_csv(SWEEP_HEADER, sweep_rows(result))
    if isinstance(result, TriangleResult):
        return to_csv(HEATMAP_HEADER, heatmap_rows(result))
    if isinstance(result, BarrierReport):
        return to_csv(BARRIER_HEADER, barrier_rows([("", result)]))
    if isinstance(result, AgreementCounts):
        return to_csv(AGREEMENT_HEADER, agreement_rows([("", "", "", result)]))
    if isinstance(result, Histogram):
        return to_csv(HISTOGRAM_HEADER, histogram_rows(result))
    if isinstance(result, list) and result and all(isinstance(r, WidthRow) for r in result):
        return to_csv(WIDTH_HEADER, width_rows(result))
    raise ValidationError(f"cannot emit results of type {type(result).__name__}")


def write_text(text: str, path) -> None:
    path = Path(path)
    try:
        path.write_text(text, encoding="utf-8", newline="")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc.strerror or exc}") from exc


def emit_results(result, path) -> None:
    write_text(render(result), path)


def read_sweep_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != SWEEP_HEADER:
            raise ValidationError(f"{path}: not a sweep table (header {reader.fieldnames})")
        return [dict(row, param=float(row["param"]), sample_index=int(row["sample_index"]),
                     loss=float(row["loss"]), accuracy=float(row["accuracy"])) for row in reader]
