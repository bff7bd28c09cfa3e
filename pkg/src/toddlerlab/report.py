"""
Aggregation of transfer results into ``results.csv``, ``results.md`` and
``curves.csv``.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .checkpoint import atomic_write_bytes
from .config import ReportConfig
from .exceptions import ValidationException
from .models import Regime, Task
from .transfer import CellResult

logger = logging.getLogger(__name__)

RESULTS_HEADER = ("regime", "task", "metric", "mean", "stderr", "seeds")
CURVES_HEADER = ("regime", "task", "seed", "epoch", "loss")
RESULTS_CSV = "results.csv"
RESULTS_MD = "results.md"
CURVES_CSV = "curves.csv"

_METRIC_LABELS = {"accuracy": "Accuracy", "relative_l1": "L1 error", "iou": "IOU"}


@dataclass(frozen=True)
class ResultRow:
    regime: Regime
    task: Task
    mean: float
    stderr: float
    seeds: int

    @property
    def metric(self) -> str:
        return self.task.metric


def standard_error(values: Sequence[float]) -> float:
    """Sample standard deviation over √n; 0 for a single value."""
    if len(values) < 2:
        return 0.0
    return float(np.std(values, ddof=1) / math.sqrt(len(values)))


def aggregate(results: Sequence[CellResult]) -> List[ResultRow]:
    """One row per (regime, task), ordered by task then regime."""
    grouped: Dict[Tuple[Task, Regime], List[float]] = {}
    for result in results:
        grouped.setdefault((result.task, result.regime), []).append(result.metric)
    rows = []
    for task in Task:
        for regime in Regime:
            values = grouped.get((task, regime))
            if values:
                mean = float(np.mean(values))
                rows.append(ResultRow(regime, task, mean, standard_error(values), len(values)))
    return rows


def _csv_text(header: Sequence[str], records: Sequence[Sequence[object]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(records)
    return buffer.getvalue()


def results_csv(rows: Sequence[ResultRow]) -> str:
    return _csv_text(
        RESULTS_HEADER,
        [
            (r.regime.value, r.task.value, r.metric, f"{r.mean:.6f}", f"{r.stderr:.6f}", r.seeds)
            for r in rows
        ],
    )


def parse_results_csv(text: str) -> List[ResultRow]:
    """
    Raises:
        ValidationException: If the header or a row is malformed.
    """
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != RESULTS_HEADER:
        raise ValidationException(f"Expected results header {','.join(RESULTS_HEADER)}")
    rows = []
    for number, record in enumerate(reader, start=2):
        try:
            regime, task, _, mean, stderr, seeds = record
            rows.append(
                ResultRow(Regime(regime), Task(task), float(mean), float(stderr), int(seeds))
            )
        except ValueError as e:
            raise ValidationException(f"Malformed results row {number}: {record}") from e
    return rows


def curves_csv(results: Sequence[CellResult]) -> str:
    records = [
        (r.regime.value, r.task.value, r.seed, epoch, f"{loss:.6f}")
        for r in results
        for epoch, loss in enumerate(r.losses, start=1)
    ]
    return _csv_text(CURVES_HEADER, records)


def relative_improvement(proposed: float, baseline: float, task: Task) -> Optional[float]:
    """
    Improvement of ``proposed`` over ``baseline`` in percent of the baseline;
    for distance error lower is better.
    """
    if baseline == 0:
        return None
    if task is Task.DISTANCE:
        return 100.0 * (baseline - proposed) / baseline
    return 100.0 * (proposed - baseline) / baseline


def results_markdown(rows: Sequence[ResultRow], config: Optional[ReportConfig] = None) -> str:
    """Tasks as rows, regimes as columns, ``mean ± stderr`` in each cell."""
    config = config or ReportConfig()
    places = config.decimals
    by_key = {(r.task, r.regime): r for r in rows}
    lines = [
        "| Task | " + " | ".join(regime.title for regime in Regime) + " |",
        "|---|" + "---|" * len(Regime),
    ]
    for task in Task:
        cells = []
        for regime in Regime:
            row = by_key.get((task, regime))
            cells.append(f"{row.mean:.{places}f} ± {row.stderr:.{places}f}" if row else "-")
        label = f"{task.title} ({_METRIC_LABELS[task.metric]})"
        lines.append(f"| {label} | " + " | ".join(cells) + " |")

    if config.relative_improvement:
        notes = []
        for task in Task:
            proposed = by_key.get((task, Regime.PROPOSED))
            baseline = by_key.get((task, Regime.AUTOENCODER))
            if proposed is None or baseline is None:
                continue
            gain = relative_improvement(proposed.mean, baseline.mean, task)
            if gain is not None:
                notes.append(f"- {task.title}: {gain:+.{places}f}%")
        if notes:
            lines += ["", "Relative improvement of Proposed over Autoencoder:", ""] + notes
    return "\n".join(lines) + "\n"


def write_report(
    out_dir: Union[str, Path],
    results: Sequence[CellResult],
    config: Optional[ReportConfig] = None,
) -> List[ResultRow]:
    """Write results.csv, results.md and curves.csv into ``out_dir``."""
    target = Path(out_dir)
    rows = aggregate(results)
    atomic_write_bytes(target / RESULTS_CSV, results_csv(rows).encode("utf-8"))
    atomic_write_bytes(target / RESULTS_MD, results_markdown(rows, config).encode("utf-8"))
    atomic_write_bytes(target / CURVES_CSV, curves_csv(results).encode("utf-8"))
    logger.info("Wrote %d result rows to %s", len(rows), target)
    return rows
