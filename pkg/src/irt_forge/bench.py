"""Runtime sweep over dataset sizes."""

from __future__ import annotations

import csv
import io as _io
import logging
import time
from dataclasses import dataclass

from . import api, registry
from .dataset import SimulationSpec, simulate
from .errors import IRTError

log = logging.getLogger(__name__)

BENCH_COLUMNS = ("items", "subjects", "seconds", "final_loss", "error")


@dataclass
class BenchRow:
    items: int
    subjects: int
    seconds: float
    final_loss: float
    error: str = ""


def run_bench(item_counts, subject_counts, model="1pl", estimator="svi", config=None, seed=0):
    """Simulate and fit every (items, subjects) cell in turn.

    Only the fit is timed. A failing cell is recorded with its error message
    and the sweep moves on.
    """
    if not item_counts or not subject_counts:
        raise ValueError("bench grid must not be empty")
    kind = registry.lookup(model).kind
    rows = []
    for n_items in item_counts:
        for n_subjects in subject_counts:
            dataset, _, _ = simulate(SimulationSpec(kind=kind, n_subjects=n_subjects, n_items=n_items, seed=seed))
            start = time.perf_counter()
            try:
                report = api.fit(dataset, model, estimator, config)
                row = BenchRow(n_items, n_subjects, time.perf_counter() - start, report.final_loss)
            except IRTError as exc:
                row = BenchRow(n_items, n_subjects, time.perf_counter() - start, float("nan"), str(exc))
            log.info("items=%d subjects=%d seconds=%.3f loss=%s", n_items, n_subjects, row.seconds, row.final_loss)
            rows.append(row)
    return rows


def bench_csv(rows) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(BENCH_COLUMNS)
    for r in rows:
        writer.writerow([r.items, r.subjects, f"{r.seconds:.6f}", repr(float(r.final_loss)), r.error])
    return buf.getvalue()
