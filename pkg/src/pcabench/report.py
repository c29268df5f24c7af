"""Render a run directory into Markdown and CSV tables.

The report reads metrics.csv (and info_kept.csv when present) rather than
the in-memory sweep state, so it also works over directories assembled by
hand or merged from several machines. Rows may then be missing their
runtime fields; a chosen best row without a runtime gets an explicit
MISSING marker and the report is flagged not-ok so the CLI exits nonzero.

Ordering is deterministic: dataset, then model, then P ascending with the
control row last.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Optional

from .analysis import WO_PCA, MetricsRecord, best_record
from .errors import DataError
from .harness import MetricsRow, read_metrics_csv

MISSING = "MISSING"


@dataclass
class ConsolidatedRow:
    dataset: str
    model: str
    best_label: str              # component count, or the control label
    mse_reduction_pct: float
    runtime_reduction_pct: Optional[float]  # None when a runtime is absent


@dataclass
class Report:
    markdown: str
    ok: bool
    accuracy: list               # MetricsRow, display order
    consolidated: list           # ConsolidatedRow + ("Average", ...) rows
    skipped: list                # notes for groups that cannot consolidate
    info_rows: list              # raw info_kept.csv rows (dicts)


def _sort_key(row: MetricsRow):
    p = row.p_components
    return (row.dataset, row.model, p is None, -1 if p is None else p)


def _select_best(rows: list) -> MetricsRow:
    # best_record carries the tie rule; runtime may be absent here, so feed
    # it placeholder runtimes (it only looks at mse and p_components)
    records = [
        MetricsRecord(r.dataset, r.model, r.p_components, r.mse, r.mae,
                      r.runtime_s if r.runtime_s is not None else 1.0)
        for r in rows
    ]
    chosen = best_record(records)
    for r in rows:
        if r.p_components == chosen.p_components:
            return r
    raise AssertionError("best_record returned a row not in its input")


def consolidate(rows: list) -> tuple:
    """Per-group reductions with gap markers.

    Returns (consolidated rows, skipped notes, ok). Groups lacking a control
    row or lacking PCA rows are skipped with a note; that alone does not
    clear ok. A missing runtime on a chosen row does.
    """
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.dataset, r.model), []).append(r)

    out: list = []
    skipped: list = []
    ok = True
    for (ds, model) in sorted(groups):
        recs = groups[(ds, model)]
        controls = [r for r in recs if r.p_components is None]
        pca_rows = [r for r in recs if r.p_components is not None]
        if len(controls) != 1 or not pca_rows:
            reason = ("no control row" if not controls
                      else "multiple control rows" if len(controls) > 1
                      else "no PCA rows")
            skipped.append(f"{ds}/{model}: not consolidated ({reason})")
            continue
        base = controls[0]
        best = _select_best(recs)
        mse_pct = (0.0 if best.p_components is None
                   else (base.mse - best.mse) / base.mse * 100.0)
        if best.p_components is None:
            rt_pct: Optional[float] = 0.0
        elif base.runtime_s is None or best.runtime_s is None:
            rt_pct = None
            ok = False
        else:
            rt_pct = (base.runtime_s - best.runtime_s) / base.runtime_s * 100.0
        label = WO_PCA if best.p_components is None else str(best.p_components)
        out.append(ConsolidatedRow(ds, model, label, mse_pct, rt_pct))

    # per-model averages in first-appearance order, like the published table
    order: list = []
    for row in out:
        if row.model not in order:
            order.append(row.model)
    averages: list = []
    for model in order:
        rs = [r for r in out if r.model == model]
        mse_avg = sum(r.mse_reduction_pct for r in rs) / len(rs)
        if any(r.runtime_reduction_pct is None for r in rs):
            rt_avg: Optional[float] = None
        else:
            rt_avg = sum(r.runtime_reduction_pct for r in rs) / len(rs)
        averages.append(ConsolidatedRow("Average", model, "", mse_avg, rt_avg))
    return out + averages, skipped, ok


def _read_info_csv(path: str) -> list:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def _fmt_runtime(v: Optional[float]) -> str:
    return "" if v is None else f"{v:.6g}"


def _fmt_pct(v: Optional[float]) -> str:
    return MISSING if v is None else f"{v:.2f}"


def _md_table(header: list, rows: list) -> str:
    lines = ["| " + " | ".join(header) + " |",
             "| " + " | ".join("---" for _ in header) + " |"]
    for row in rows:
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines)


def build_report(run_dir: str) -> Report:
    metrics_path = os.path.join(run_dir, "metrics.csv")
    rows = sorted(read_metrics_csv(metrics_path), key=_sort_key)
    consolidated, skipped, ok = consolidate(rows)

    info_path = os.path.join(run_dir, "info_kept.csv")
    info_rows = _read_info_csv(info_path) if os.path.exists(info_path) else []

    parts = ["# Benchmark report", "",
             f"Source: metrics.csv ({len(rows)} rows).", "",
             "## Per-run accuracy", ""]
    acc_rows = []
    for r in rows:
        comp = WO_PCA if r.p_components is None else str(r.p_components)
        acc_rows.append([r.dataset, r.model, comp,
                         f"{r.mse:.5f}", f"{r.mae:.5f}",
                         _fmt_runtime(r.runtime_s), _fmt_runtime(r.pca_fit_s)])
    parts.append(_md_table(
        ["Dataset", "Model", "Components", "MSE", "MAE",
         "Runtime (s)", "PCA fit (s)"], acc_rows))
    parts.append("")

    parts += ["## Consolidated reductions", ""]
    if consolidated:
        red_rows = [[c.dataset, c.model, c.best_label,
                     f"{c.mse_reduction_pct:.2f}", _fmt_pct(c.runtime_reduction_pct)]
                    for c in consolidated]
        parts.append(_md_table(
            ["Dataset", "Model", "Best P", "MSE reduction (%)",
             "Runtime reduction (%)"], red_rows))
    else:
        parts.append("No group had both a control row and PCA rows.")
    parts.append("")
    if skipped:
        for note in skipped:
            parts.append(f"- {note}")
        parts.append("")
    if not ok:
        parts.append(f"{MISSING}: a chosen row lacks its runtime field, "
                     "so a runtime reduction could not be computed.")
        parts.append("")

    if info_rows:
        parts += ["## Information kept", ""]
        ik_rows = [[r["dataset"], r["variables"], r["components"],
                    f"{float(r['information_kept']) * 100.0:.2f}",
                    f"{float(r['dataset_ratio']) * 100.0:.2f}"]
                   for r in info_rows]
        parts.append(_md_table(
            ["Dataset", "Variables", "Components", "Information kept (%)",
             "P/M (%)"], ik_rows))
        parts.append("")

    markdown = "\n".join(parts)
    return Report(markdown=markdown, ok=ok, accuracy=rows,
                  consolidated=consolidated, skipped=skipped,
                  info_rows=info_rows)


def write_report(run_dir: str) -> tuple:
    """Write report.md plus the CSV renditions; returns (report, paths)."""
    if not os.path.isdir(run_dir):
        raise DataError(f"run directory {run_dir} does not exist")
    report = build_report(run_dir)
    paths = {"markdown": os.path.join(run_dir, "report.md")}
    with open(paths["markdown"], "w") as f:
        f.write(report.markdown)

    paths["accuracy"] = os.path.join(run_dir, "report_accuracy.csv")
    with open(paths["accuracy"], "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["dataset", "model", "components", "mse", "mae",
                    "runtime_s", "pca_fit_s"])
        for r in report.accuracy:
            comp = WO_PCA if r.p_components is None else str(r.p_components)
            w.writerow([r.dataset, r.model, comp, f"{r.mse:.5f}", f"{r.mae:.5f}",
                        _fmt_runtime(r.runtime_s), _fmt_runtime(r.pca_fit_s)])

    paths["reductions"] = os.path.join(run_dir, "report_reductions.csv")
    with open(paths["reductions"], "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["dataset", "model", "best_components",
                    "mse_reduction_pct", "runtime_reduction_pct"])
        for c in report.consolidated:
            w.writerow([c.dataset, c.model, c.best_label,
                        f"{c.mse_reduction_pct:.2f}",
                        _fmt_pct(c.runtime_reduction_pct)])

    if report.info_rows:
        paths["info"] = os.path.join(run_dir, "report_info_kept.csv")
        with open(paths["info"], "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["dataset", "variables", "components",
                        "information_kept_pct", "dataset_ratio_pct"])
            for r in report.info_rows:
                w.writerow([r["dataset"], r["variables"], r["components"],
                            f"{float(r['information_kept']) * 100.0:.2f}",
                            f"{float(r['dataset_ratio']) * 100.0:.2f}"])
    return report, paths
