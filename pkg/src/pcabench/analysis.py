"""Metrics, Pearson correlation matrices, and table consolidation.

reduction_table implements the published consolidation procedure: per
(dataset, model) group take the lowest-MSE row, pair it with its runtime
by exact (dataset, model, components) key, and report both reductions
against the group's control row. Ties go to the smaller component count;
the control wins a tie last. When the control is already the best row,
both reductions are exactly 0.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from importlib import resources
from typing import Optional

import numpy as np

from .dataset import SeriesTable
from .errors import ContractError, InsufficientDataError, ShapeError
from .pca import PcaModel, information_kept

WO_PCA = "w/o PCA"


def mse(pred, truth) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ShapeError(f"pred/truth shapes differ: {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise ContractError("mse of empty arrays")
    d = pred - truth
    return float(np.mean(d * d))


def mae(pred, truth) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ShapeError(f"pred/truth shapes differ: {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise ContractError("mae of empty arrays")
    return float(np.mean(np.abs(pred - truth)))


@dataclass(frozen=True)
class MetricsRecord:
    dataset: str
    model: str
    p_components: Optional[int]  # None = the control run
    mse: float
    mae: float
    runtime_s: float

    def __post_init__(self):
        if self.mse < 0 or self.mae < 0:
            raise ContractError("mse/mae must be nonnegative")
        if not self.runtime_s > 0:
            raise ContractError(f"runtime_s must be positive, got {self.runtime_s}")
        if self.p_components is not None and self.p_components < 1:
            raise ContractError(f"p_components must be >= 1, got {self.p_components}")

    @property
    def components_label(self) -> str:
        return WO_PCA if self.p_components is None else str(self.p_components)


@dataclass(frozen=True)
class ReductionRow:
    dataset: str
    model: str
    best_p: Optional[int]        # None when the control row wins
    best_mse: float
    baseline_mse: float
    best_runtime_s: float
    baseline_runtime_s: float
    mse_reduction_pct: float
    runtime_reduction_pct: float


@dataclass(frozen=True)
class InfoKeptRecord:
    dataset_name: str
    m_variables: int
    p_components: int
    information_kept: float
    dataset_ratio: float

    def __post_init__(self):
        if self.dataset_ratio != self.p_components / self.m_variables:
            raise ContractError("dataset_ratio must equal p_components / m_variables exactly")


@dataclass
class PccMatrix:
    names: list[str]
    values: np.ndarray
    constant_columns: list[int]  # sentinel-zeroed columns (no variance)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([""] + self.names)
        for name, row in zip(self.names, self.values):
            w.writerow([name] + [f"{v:.10g}" for v in row])
        return buf.getvalue()


def pearson(x, y) -> float:
    """Pearson correlation of two equal-length 1-D arrays."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ShapeError(f"need equal-length 1-D arrays, got {x.shape} and {y.shape}")
    if x.size < 2:
        raise InsufficientDataError("pearson needs at least 2 samples")
    xc = x - x.mean()
    yc = y - y.mean()
    denom = float(np.sqrt((xc @ xc) * (yc @ yc)))
    if denom == 0.0:
        return 0.0  # constant input, sentinel
    return float(np.clip((xc @ yc) / denom, -1.0, 1.0))


def pcc_matrix(table: SeriesTable) -> PccMatrix:
    """Correlation matrix over all channels plus the target (last)."""
    if table.n_rows < 2:
        raise InsufficientDataError(f"pcc_matrix needs T >= 2, got {table.n_rows}")
    if table.target_in_channels:
        data = table.channels
        names = list(table.channel_names)
    else:
        data = np.column_stack([table.channels, table.target]) if table.n_channels else table.target[:, None]
        names = list(table.channel_names) + [table.target_name]
    m = data.shape[1]
    centered = data - data.mean(axis=0)
    norms = np.sqrt(np.sum(centered * centered, axis=0))
    constant = [i for i in range(m) if norms[i] == 0.0]
    safe = np.where(norms == 0.0, 1.0, norms)
    unit = centered / safe
    values = np.clip(unit.T @ unit, -1.0, 1.0)
    for i in constant:
        values[i, :] = 0.0
        values[:, i] = 0.0
    # exact symmetry and unit diagonal by construction
    values = (values + values.T) / 2.0
    np.fill_diagonal(values, 1.0)
    return PccMatrix(names=names, values=values, constant_columns=constant)


def best_record(records: list[MetricsRecord]) -> MetricsRecord:
    """Lowest-MSE record; ties go to the smaller P and the control loses."""
    if not records:
        raise ContractError("best_record of an empty record list")
    return min(records, key=lambda r: (r.mse, np.inf if r.p_components is None
                                       else r.p_components))


def reduction_table(
    acc: list[MetricsRecord],
    runtimes: Optional[list[MetricsRecord]] = None,
) -> list[ReductionRow]:
    """Consolidate accuracy records (and optionally separate runtime
    records) into one best-vs-control row per (dataset, model).

    When `runtimes` is given, each chosen row's runtime is looked up there
    by exact (dataset, model, components) key; otherwise the accuracy
    records' own runtime_s fields are used.
    """
    rt_map = None
    if runtimes is not None:
        rt_map = {}
        for r in runtimes:
            key = (r.dataset, r.model, r.p_components)
            if key in rt_map:
                raise ContractError(f"duplicate runtime record for {key}")
            rt_map[key] = r.runtime_s

    groups: dict[tuple, list[MetricsRecord]] = {}
    for r in acc:
        groups.setdefault((r.dataset, r.model), []).append(r)

    def runtime_of(rec: MetricsRecord) -> float:
        if rt_map is None:
            return rec.runtime_s
        key = (rec.dataset, rec.model, rec.p_components)
        if key not in rt_map:
            raise ContractError(f"missing runtime for {key}")
        return rt_map[key]

    rows = []
    for (ds_name, model), recs in groups.items():
        baselines = [r for r in recs if r.p_components is None]
        pca_rows = [r for r in recs if r.p_components is not None]
        if len(baselines) != 1:
            raise ContractError(f"group ({ds_name}, {model}) needs exactly one {WO_PCA!r} row")
        if not pca_rows:
            raise ContractError(f"group ({ds_name}, {model}) has no PCA rows")
        base = baselines[0]
        best = best_record(recs)
        base_rt = runtime_of(base)
        if best.p_components is None:
            rows.append(ReductionRow(ds_name, model, None, base.mse, base.mse,
                                     base_rt, base_rt, 0.0, 0.0))
        else:
            best_rt = runtime_of(best)
            rows.append(ReductionRow(
                ds_name, model, best.p_components, best.mse, base.mse, best_rt, base_rt,
                (base.mse - best.mse) / base.mse * 100.0,
                (base_rt - best_rt) / base_rt * 100.0,
            ))
    rows.sort(key=lambda r: (r.dataset, r.model))
    return rows


def average_reduction(rows: list[ReductionRow]) -> dict[str, tuple[float, float]]:
    """Per-model means of the full-precision reduction percentages.

    Models keep their first-appearance order from `rows`.
    """
    if not rows:
        raise ContractError("average_reduction of an empty row list")
    acc: dict[str, list[ReductionRow]] = {}
    for r in rows:
        acc.setdefault(r.model, []).append(r)
    return {
        model: (
            sum(r.mse_reduction_pct for r in rs) / len(rs),
            sum(r.runtime_reduction_pct for r in rs) / len(rs),
        )
        for model, rs in acc.items()
    }


def info_kept_table(fits: list[tuple[str, PcaModel]]) -> list[InfoKeptRecord]:
    """One row per fitted model: information kept and the P/M ratio."""
    out = []
    for ds_name, model in fits:
        p = model.n_components
        m = model.n_channels
        out.append(InfoKeptRecord(
            dataset_name=ds_name,
            m_variables=m,
            p_components=p,
            information_kept=information_kept(model, p),
            dataset_ratio=p / m,
        ))
    return out


def _fixture_path(name: str):
    return resources.files("pcabench").joinpath("fixtures").joinpath(name)


def load_paper_fixture(path=None) -> tuple[list[MetricsRecord], list[MetricsRecord]]:
    """Read the shipped benchmark tables into (accuracy, runtime) records."""
    if path is None:
        text = _fixture_path("paper_tables.csv").read_text()
    else:
        with open(path) as f:
            text = f.read()
    records = []
    for row in csv.DictReader(io.StringIO(text)):
        p = None if row["components"] == WO_PCA else int(row["components"])
        records.append(MetricsRecord(
            dataset=row["dataset"], model=row["model"], p_components=p,
            mse=float(row["mse"]), mae=float(row["mae"]),
            runtime_s=float(row["runtime_s"]),
        ))
    return records, list(records)


def load_expected_reductions(path=None) -> dict[tuple[str, str], tuple[float, float]]:
    """Published consolidated percentages, keyed by (dataset, model).

    The key ("Average", model) carries the per-model average row.
    """
    if path is None:
        text = _fixture_path("expected_reductions.csv").read_text()
    else:
        with open(path) as f:
            text = f.read()
    out = {}
    for row in csv.DictReader(io.StringIO(text)):
        out[(row["dataset"], row["model"])] = (
            float(row["mse_reduction_pct"]), float(row["runtime_reduction_pct"])
        )
    return out
