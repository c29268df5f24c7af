"""Sweep harness: one (dataset, P) cell per run, CSV tables plus a manifest.

A sweep resolves an ExperimentConfig, loads the dataset once, then runs one
cell per requested component count and always one control cell (no PCA, raw
channels plus the target appended). Each cell derives its own seed from the
sweep seed so cells are independent of execution order. Wall-clock runtime
covers train+test only; the PCA fit is timed separately and reported in its
own column, since published runtimes do not say which they include.

metrics.csv carries the timing columns; metrics_stable.csv is the same table
without them, and is the file that must come out byte-identical when the same
config is run twice.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
import platform
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from . import __version__
from . import pca as pca_mod
from .analysis import (
    WO_PCA,
    InfoKeptRecord,
    MetricsRecord,
    average_reduction,
    load_expected_reductions,
    load_paper_fixture,
    pcc_matrix,
    reduction_table,
)
from .dataset import (
    SeriesTable,
    SplitSpec,
    chronological_split,
    load_csv,
    make_windows,
    reduce_with_pca,
    standardize,
    with_target_channel,
)
from .errors import ContractError, DataError
from .rng import SeededRng, derive_cell_seed
from .training import BACKBONES, TrainReport, train_backbone
from .transformer import ForecastModel, TransformerConfig

PCA_FIT_SCOPES = ("full", "train")
PCA_METHODS = ("exact", "randomized")

_TCFG_FIELDS = {f.name for f in dataclasses.fields(TransformerConfig)}
_TCFG_OVERRIDABLE = sorted(_TCFG_FIELDS - {"input_channels", "seed"})


def _check_transformer_overrides(overrides: dict) -> None:
    bad = sorted(set(overrides) - set(_TCFG_OVERRIDABLE))
    if bad:
        raise ContractError(
            f"unknown transformer override(s) {bad}; valid keys: {_TCFG_OVERRIDABLE} "
            "(input_channels and seed are set by the harness)"
        )


@dataclass
class ExperimentConfig:
    """Resolved sweep description. The control cell is always included."""

    dataset: str
    target: str
    components: tuple
    out_dir: str
    backbone: str = "transformer"
    dataset_name: Optional[str] = None
    model_label: Optional[str] = None
    seed: int = 0
    split: SplitSpec = field(default_factory=SplitSpec)
    pca_fit: str = "full"
    append_target: bool = True
    pca_method: str = "randomized"
    oversample: int = 10
    power_iters: int = 4
    transformer: dict = field(default_factory=dict)

    def __post_init__(self):
        if isinstance(self.split, dict):
            self.split = SplitSpec(**self.split)
        comps = list(self.components)
        if not comps:
            raise ContractError("components must list at least one P value")
        for p in comps:
            if isinstance(p, bool) or not isinstance(p, int) or p < 1:
                raise ContractError(f"components must be integers >= 1, got {p!r}")
        if len(set(comps)) != len(comps):
            raise ContractError(f"components must be unique, got {comps}")
        self.components = tuple(sorted(comps))
        if self.backbone not in BACKBONES:
            raise ContractError(f"backbone must be one of {BACKBONES}, got {self.backbone!r}")
        if self.pca_fit not in PCA_FIT_SCOPES:
            raise ContractError(f"pca_fit must be one of {PCA_FIT_SCOPES}, got {self.pca_fit!r}")
        if self.pca_method not in PCA_METHODS:
            raise ContractError(f"pca_method must be one of {PCA_METHODS}, got {self.pca_method!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ContractError(f"seed must be a nonnegative integer, got {self.seed!r}")
        for name in ("oversample", "power_iters"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 0:
                raise ContractError(f"{name} must be a nonnegative integer, got {v!r}")
        if not isinstance(self.transformer, dict):
            raise ContractError("transformer overrides must be a dict")
        _check_transformer_overrides(self.transformer)

    @property
    def resolved_name(self) -> str:
        if self.dataset_name:
            return self.dataset_name
        stem = os.path.basename(self.dataset)
        return os.path.splitext(stem)[0]

    @property
    def resolved_model(self) -> str:
        return self.model_label or self.backbone

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ContractError(f"config must be a JSON object, got {type(doc).__name__}")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ContractError(f"unknown config key(s) {unknown}; valid keys: {sorted(known)}")
        for req in ("dataset", "target", "components", "out_dir"):
            if req not in doc:
                raise ContractError(f"config is missing required key {req!r}")
        doc = dict(doc)
        doc["components"] = tuple(doc["components"])
        return cls(**doc)

    @classmethod
    def from_sources(cls, config_path: Optional[str] = None, **overrides) -> "ExperimentConfig":
        """JSON file first, then non-None keyword overrides on top."""
        doc: dict = {}
        if config_path is not None:
            with open(config_path) as f:
                try:
                    doc = json.load(f)
                except json.JSONDecodeError as e:
                    raise ContractError(f"config file {config_path} is not valid JSON: {e}")
        for k, v in overrides.items():
            if v is not None:
                doc[k] = v
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["components"] = list(self.components)
        doc["dataset_name"] = self.resolved_name
        doc["model_label"] = self.resolved_model
        return doc


def sweep_cells(config: ExperimentConfig) -> list:
    """(label, P) pairs, P ascending, the control always last."""
    return [(f"p{p}", p) for p in config.components] + [("control", None)]


def make_transformer_config(config: ExperimentConfig, input_channels: int,
                            seed: int) -> TransformerConfig:
    overrides = dict(config.transformer)
    _check_transformer_overrides(overrides)
    return TransformerConfig(input_channels=input_channels, seed=seed, **overrides)


@dataclass
class CellData:
    """Everything a cell needs downstream of data preparation."""

    table: SeriesTable           # reduced (or control) table, standardized
    windows: tuple               # (train, val, test) WindowBatch lists
    tcfg: TransformerConfig
    pca_model: Optional[pca_mod.PcaModel]
    standardization: object
    pca_fit_s: float


def prepare_cell_data(table: SeriesTable, config: ExperimentConfig,
                      p: Optional[int], cell_seed: int) -> CellData:
    """Reduce (unless control), split, standardize, and window one cell.

    The control path runs the identical pipeline with the reduction step
    skipped: the raw channels stand in for the scores, and the target is
    appended exactly as reduce_with_pca would append it.
    """
    if p is None:
        reduced = with_target_channel(table) if config.append_target else table
        pca_model = None
        pca_fit_s = 0.0
    else:
        if not 1 <= p <= table.n_channels:
            raise ContractError(
                f"P must lie in [1, {table.n_channels}], got {p}"
            )
        t0 = time.monotonic()
        if config.pca_fit == "train":
            train_range = chronological_split(table, config.split)[0]
            fit_rows = table.channels[train_range.start:train_range.stop]
        else:
            fit_rows = table.channels
        pca_model = pca_mod.fit(
            fit_rows, p,
            method=config.pca_method,
            rng=SeededRng(cell_seed),
            oversample=config.oversample,
            power_iters=config.power_iters,
            channel_names=table.channel_names,
        )
        reduced = reduce_with_pca(table, pca_model, append_target=config.append_target)
        pca_fit_s = time.monotonic() - t0

    ranges = chronological_split(reduced, config.split)
    std_table, stats = standardize(reduced, ranges[0])
    tcfg = make_transformer_config(config, input_channels=std_table.n_channels,
                                   seed=cell_seed)
    windows = tuple(
        make_windows(std_table, r, tcfg.lookback, tcfg.label_len, tcfg.horizon)
        for r in ranges
    )
    return CellData(table=std_table, windows=windows, tcfg=tcfg,
                    pca_model=pca_model, standardization=stats,
                    pca_fit_s=pca_fit_s)


@dataclass
class CellResult:
    label: str
    p: Optional[int]
    seed: int
    record: MetricsRecord
    report: TrainReport
    pca_model: Optional[pca_mod.PcaModel]
    pca_fit_s: float
    info: Optional[InfoKeptRecord]
    window_counts: dict
    input_channels: int
    paths: dict = field(default_factory=dict)


def run_cell(table: SeriesTable, config: ExperimentConfig, label: str,
             p: Optional[int], cell_index: int,
             out_dir: Optional[str] = None) -> CellResult:
    """Run one sweep cell end to end and optionally write its artifacts."""
    cell_seed = derive_cell_seed(config.seed, cell_index)
    data = prepare_cell_data(table, config, p, cell_seed)
    train_w, val_w, test_w = data.windows
    model, report = train_backbone(config.backbone, train_w, val_w, test_w, data.tcfg)
    record = MetricsRecord(
        dataset=config.resolved_name,
        model=config.resolved_model,
        p_components=p,
        mse=report.test_mse,
        mae=report.test_mae,
        runtime_s=report.runtime_s,
    )
    info = None
    if data.pca_model is not None:
        info = InfoKeptRecord(
            dataset_name=config.resolved_name,
            m_variables=table.n_channels,
            p_components=p,
            information_kept=pca_mod.information_kept(data.pca_model, p),
            dataset_ratio=p / table.n_channels,
        )
    paths = {}
    if out_dir is not None:
        cell_dir = os.path.join(out_dir, "cells", label)
        os.makedirs(cell_dir, exist_ok=True)
        report_path = os.path.join(cell_dir, "report.json")
        with open(report_path, "w") as f:
            f.write(report.to_json())
        paths["report"] = os.path.relpath(report_path, out_dir)
        if data.pca_model is not None:
            pca_path = os.path.join(cell_dir, "pca_model.json")
            with open(pca_path, "w") as f:
                f.write(data.pca_model.to_json())
            paths["pca_model"] = os.path.relpath(pca_path, out_dir)
        if isinstance(model, ForecastModel):
            ckpt_path = os.path.join(cell_dir, "checkpoint.bin")
            model.save(ckpt_path)
            paths["checkpoint"] = os.path.relpath(ckpt_path, out_dir)
    return CellResult(
        label=label, p=p, seed=cell_seed, record=record, report=report,
        pca_model=data.pca_model, pca_fit_s=data.pca_fit_s, info=info,
        window_counts={"train": len(train_w), "val": len(val_w), "test": len(test_w)},
        input_channels=data.tcfg.input_channels, paths=paths,
    )


@dataclass
class SweepResult:
    config: ExperimentConfig
    results: list                # CellResult, in cell order
    failures: list               # {"label", "components", "error"} dicts
    out_dir: str
    paths: dict

    @property
    def ok(self) -> bool:
        return not self.failures

    @property
    def records(self) -> list:
        return [r.record for r in self.results]


def _fmt(x) -> str:
    # repr gives the shortest string that round-trips the float64 exactly
    return repr(float(x))


def write_metrics_csv(path: str, rows: list, stable: bool = False) -> None:
    """rows: (MetricsRecord, pca_fit_s or None) pairs.

    stable drops the wall-clock columns so the file is byte-reproducible.
    """
    header = ["dataset", "model", "components", "mse", "mae"]
    if not stable:
        header += ["runtime_s", "pca_fit_s"]
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for rec, fit_s in rows:
            row = [rec.dataset, rec.model, rec.components_label,
                   _fmt(rec.mse), _fmt(rec.mae)]
            if not stable:
                row += [_fmt(rec.runtime_s), "" if fit_s is None else _fmt(fit_s)]
            w.writerow(row)


@dataclass(frozen=True)
class MetricsRow:
    """One parsed metrics.csv row; timing fields may be absent (None)."""

    dataset: str
    model: str
    p_components: Optional[int]
    mse: float
    mae: float
    runtime_s: Optional[float]
    pca_fit_s: Optional[float]


def read_metrics_csv(path: str) -> list:
    """Parse metrics.csv rows; empty timing fields become None."""
    if not os.path.exists(path):
        raise DataError(f"no metrics.csv at {path}")
    out = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        required = {"dataset", "model", "components", "mse", "mae"}
        missing = required - set(reader.fieldnames or [])
        if missing:
            raise DataError(f"{path} is missing column(s) {sorted(missing)}")
        for row in reader:
            comp = row["components"]
            rt = row.get("runtime_s") or None
            fit = row.get("pca_fit_s") or None
            out.append(MetricsRow(
                dataset=row["dataset"],
                model=row["model"],
                p_components=None if comp == WO_PCA else int(comp),
                mse=float(row["mse"]),
                mae=float(row["mae"]),
                runtime_s=None if rt is None else float(rt),
                pca_fit_s=None if fit is None else float(fit),
            ))
    if not out:
        raise DataError(f"{path} has no data rows")
    return out


def write_reductions_csv(path: str, rows: list, averages: dict) -> None:
    """ReductionRow list plus per-model average rows (dataset='Average')."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["dataset", "model", "best_components",
                    "mse_reduction_pct", "runtime_reduction_pct"])
        for r in rows:
            best = WO_PCA if r.best_p is None else str(r.best_p)
            w.writerow([r.dataset, r.model, best,
                        _fmt(r.mse_reduction_pct), _fmt(r.runtime_reduction_pct)])
        for model, (mse_pct, rt_pct) in averages.items():
            w.writerow(["Average", model, "", _fmt(mse_pct), _fmt(rt_pct)])


def write_info_kept_csv(path: str, records: list) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["dataset", "variables", "components",
                    "information_kept", "dataset_ratio"])
        for r in records:
            w.writerow([r.dataset_name, r.m_variables, r.p_components,
                        _fmt(r.information_kept), _fmt(r.dataset_ratio)])


def environment_info() -> dict:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "pandas": pd.__version__,
        "pcabench": __version__,
    }


def run_sweep(config: ExperimentConfig) -> SweepResult:
    """Run every cell, then write the consolidated tables and manifest.

    Cell failures are recorded and the sweep continues; the caller decides
    the exit code from SweepResult.ok. Configuration problems (bad paths,
    P > M) raise before any cell runs.
    """
    table = load_csv(config.dataset, config.target)
    for p in config.components:
        if p > table.n_channels:
            raise ContractError(
                f"P={p} exceeds the {table.n_channels} channels of {config.resolved_name}"
            )
    out_dir = config.out_dir
    os.makedirs(out_dir, exist_ok=True)

    results: list = []
    failures: list = []
    cell_entries: list = []
    for cell_index, (label, p) in enumerate(sweep_cells(config)):
        try:
            res = run_cell(table, config, label, p, cell_index, out_dir=out_dir)
        except Exception as e:  # sweep must outlive any one cell
            failures.append({
                "label": label,
                "components": WO_PCA if p is None else p,
                "error": f"{type(e).__name__}: {e}",
            })
            cell_entries.append({
                "label": label,
                "components": WO_PCA if p is None else p,
                "seed": derive_cell_seed(config.seed, cell_index),
                "status": "failed",
                "error": f"{type(e).__name__}: {e}",
            })
            continue
        results.append(res)
        cell_entries.append({
            "label": res.label,
            "components": WO_PCA if res.p is None else res.p,
            "seed": res.seed,
            "status": "ok",
            "runtime_s": res.record.runtime_s,
            "pca_fit_s": res.pca_fit_s,
            "input_channels": res.input_channels,
            "windows": res.window_counts,
            "epochs_run": res.report.epochs_run,
            "best_epoch": res.report.best_epoch,
            "paths": res.paths,
        })

    paths = {}
    metric_rows = [(r.record, r.pca_fit_s) for r in results]
    if metric_rows:
        paths["metrics"] = os.path.join(out_dir, "metrics.csv")
        write_metrics_csv(paths["metrics"], metric_rows)
        paths["metrics_stable"] = os.path.join(out_dir, "metrics_stable.csv")
        write_metrics_csv(paths["metrics_stable"], metric_rows, stable=True)

    have_control = any(r.p is None for r in results)
    have_pca = any(r.p is not None for r in results)
    if have_control and have_pca:
        rows = reduction_table([r.record for r in results],
                               [r.record for r in results])
        paths["reductions"] = os.path.join(out_dir, "reductions.csv")
        write_reductions_csv(paths["reductions"], rows, average_reduction(rows))
    if have_pca:
        info = [r.info for r in results if r.info is not None]
        paths["info_kept"] = os.path.join(out_dir, "info_kept.csv")
        write_info_kept_csv(paths["info_kept"], info)

    split_ranges = chronological_split(table, config.split)
    manifest = {
        "config": config.to_dict(),
        "dataset": {
            "path": config.dataset,
            "name": config.resolved_name,
            "rows": int(table.n_rows),
            "channels": int(table.n_channels),
            "target": config.target,
        },
        "split": {
            name: [r.start, r.stop]
            for name, r in zip(("train", "val", "test"), split_ranges)
        },
        "environment": environment_info(),
        "cells": cell_entries,
        "failures": len(failures),
        "outputs": {k: os.path.basename(v) for k, v in paths.items()},
    }
    paths["manifest"] = os.path.join(out_dir, "manifest.json")
    with open(paths["manifest"], "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")

    return SweepResult(config=config, results=results, failures=failures,
                       out_dir=out_dir, paths=paths)


def run_fixture_sweep(out_dir: str) -> dict:
    """Write the shipped benchmark tables as a run directory.

    Stands in for a full sweep when reproducing the published consolidation:
    metrics.csv carries the published runtimes, reductions.csv the derived
    percentages, and the manifest marks the directory as fixture-backed.
    """
    acc, runtimes = load_paper_fixture()
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "metrics": os.path.join(out_dir, "metrics.csv"),
        "metrics_stable": os.path.join(out_dir, "metrics_stable.csv"),
        "reductions": os.path.join(out_dir, "reductions.csv"),
        "manifest": os.path.join(out_dir, "manifest.json"),
    }
    rows = [(rec, None) for rec in acc]
    write_metrics_csv(paths["metrics"], rows)
    write_metrics_csv(paths["metrics_stable"], rows, stable=True)
    table = reduction_table(acc, runtimes)
    write_reductions_csv(paths["reductions"], table, average_reduction(table))
    manifest = {
        "mode": "paper-fixture",
        "records": len(acc),
        "environment": environment_info(),
        "outputs": {k: os.path.basename(v) for k, v in paths.items() if k != "manifest"},
    }
    with open(paths["manifest"], "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return paths


def run_correlate(dataset_path: str, target: str, out_dir: str,
                  dataset_name: Optional[str] = None) -> str:
    """Write pcc_<dataset>.csv for the full channel+target correlation."""
    table = load_csv(dataset_path, target)
    mat = pcc_matrix(table)
    name = dataset_name or os.path.splitext(os.path.basename(dataset_path))[0]
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"pcc_{name}.csv")
    with open(path, "w", newline="") as f:
        f.write(mat.to_csv())
    return path


def check_fixture(tolerance: float = 0.02) -> tuple:
    """Rebuild the published consolidated table and diff every number.

    Returns (ok, lines): one line per (dataset, model) cell and one per
    model average, each starting with OK or MISMATCH.
    """
    acc, runtimes = load_paper_fixture()
    expected = load_expected_reductions()
    rows = reduction_table(acc, runtimes)
    averages = average_reduction(rows)
    lines = []
    ok = True

    def compare(key, got_mse, got_rt):
        nonlocal ok
        if key not in expected:
            ok = False
            lines.append(f"MISMATCH {key[0]}/{key[1]}: no published row")
            return
        want_mse, want_rt = expected[key]
        d_mse = abs(got_mse - want_mse)
        d_rt = abs(got_rt - want_rt)
        if d_mse <= tolerance and d_rt <= tolerance:
            lines.append(
                f"OK {key[0]}/{key[1]}: mse {got_mse:.2f} vs {want_mse:.2f}, "
                f"runtime {got_rt:.2f} vs {want_rt:.2f}"
            )
        else:
            ok = False
            lines.append(
                f"MISMATCH {key[0]}/{key[1]}: mse {got_mse:.4f} vs {want_mse:.2f} "
                f"(d={d_mse:.4f}), runtime {got_rt:.4f} vs {want_rt:.2f} (d={d_rt:.4f})"
            )

    for r in rows:
        compare((r.dataset, r.model), r.mse_reduction_pct, r.runtime_reduction_pct)
    for model, (mse_pct, rt_pct) in averages.items():
        compare(("Average", model), mse_pct, rt_pct)
    covered = {(r.dataset, r.model) for r in rows} | {("Average", m) for m in averages}
    for key in sorted(expected):
        if key not in covered:
            ok = False
            lines.append(f"MISMATCH {key[0]}/{key[1]}: published row not reproduced")
    return ok, lines
