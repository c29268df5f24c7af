"""CSV ingestion and the forecasting pipeline's data side.

Pipeline ordering is load -> (optional) PCA reduce -> chronological split
-> standardize with train-only statistics -> window. The target series is
kept apart from the channel matrix the whole way; the only sanctioned
routes that put a target copy among the model inputs are reduce_with_pca
(append_target) and with_target_channel, both of which mark the table.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from . import pca as pca_mod
from .errors import ContractError, DataError, InsufficientDataError, ShapeError

STD_FLOOR = 1e-8


@dataclass
class SeriesTable:
    """Multivariate series: T x M channel matrix plus the length-T target."""

    channels: np.ndarray
    target: np.ndarray
    channel_names: list[str]
    target_name: str
    timestamps: Optional[list[str]] = None
    target_in_channels: bool = False

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=np.float64)
        self.target = np.asarray(self.target, dtype=np.float64)
        if self.channels.ndim != 2:
            raise ShapeError(f"channels must be 2-D, got ndim={self.channels.ndim}")
        t, m = self.channels.shape
        if self.target.shape != (t,):
            raise ShapeError(f"target must have shape ({t},), got {self.target.shape}")
        if len(self.channel_names) != m:
            raise ShapeError(f"{len(self.channel_names)} names for {m} channels")
        if len(set(self.channel_names)) != m:
            raise ContractError("channel names must be unique")
        if self.timestamps is not None and len(self.timestamps) != t:
            raise ShapeError(f"{len(self.timestamps)} timestamps for {t} rows")
        if not self.target_in_channels:
            if self.target_name in self.channel_names:
                raise ContractError(
                    f"target {self.target_name!r} must not appear among channels"
                )
        else:
            # sanctioned appended-target layout: last channel is the target, verbatim
            if not self.channel_names or self.channel_names[-1] != self.target_name:
                raise ContractError("appended-target table must end with the target channel")
            if not np.array_equal(self.channels[:, -1], self.target):
                raise ContractError("appended target channel differs from the target series")

    @property
    def n_rows(self) -> int:
        return self.channels.shape[0]

    @property
    def n_channels(self) -> int:
        return self.channels.shape[1]


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.7
    val_frac: float = 0.1
    test_frac: float = 0.2

    def __post_init__(self):
        for name, f in (("train_frac", self.train_frac), ("val_frac", self.val_frac),
                        ("test_frac", self.test_frac)):
            if not 0.0 < f < 1.0:
                raise ContractError(f"{name} must lie in (0, 1), got {f}")
        if abs(self.train_frac + self.val_frac + self.test_frac - 1.0) > 1e-9:
            raise ContractError("split fractions must sum to 1")


@dataclass(frozen=True)
class Standardization:
    channel_mean: np.ndarray
    channel_std: np.ndarray
    target_mean: float
    target_std: float

    def to_dict(self) -> dict:
        return {
            "channel_mean": self.channel_mean.tolist(),
            "channel_std": self.channel_std.tolist(),
            "target_mean": self.target_mean,
            "target_std": self.target_std,
        }


@dataclass(frozen=True)
class WindowBatch:
    """One training window.

    decoder_seed carries the last label_len lookback rows followed by
    horizon zero-placeholder rows (encoder-decoder convention), so its
    length is label_len + horizon.
    """

    encoder_input: np.ndarray   # (lookback, C)
    decoder_seed: np.ndarray    # (label_len + horizon, C)
    horizon_target: np.ndarray  # (horizon,)
    encoder_target: np.ndarray  # (lookback,) raw target over the lookback


def load_csv(path, target_name: str) -> SeriesTable:
    """Read a header-ed CSV into a SeriesTable.

    An optional first column named `date` is treated as timestamps. Every
    other column must parse as numeric; the first offending cell is
    reported by data row and column name.
    """
    try:
        # round_trip: exact float parsing, so a written file loads bit-identically
        df = pd.read_csv(path, float_precision="round_trip")
    except pd.errors.EmptyDataError:
        raise DataError(f"{path}: empty file") from None
    if df.shape[0] == 0:
        raise DataError(f"{path}: no data rows below the header")

    timestamps = None
    if df.columns[0] == "date":
        timestamps = df["date"].astype(str).tolist()
        df = df.drop(columns=["date"])

    if target_name not in df.columns:
        raise DataError(
            f"{path}: target column {target_name!r} not found; available: {list(df.columns)}"
        )

    numeric = {}
    for col in df.columns:
        series = pd.to_numeric(df[col], errors="coerce")
        bad = series.isna()
        if bad.any():
            row = int(np.argmax(bad.to_numpy()))
            raise DataError(
                f"{path}: non-numeric value {df[col].iloc[row]!r} at data row {row}, column {col!r}"
            )
        numeric[col] = series.to_numpy(dtype=np.float64)

    target = numeric.pop(target_name)
    names = [c for c in df.columns if c != target_name]
    if names:
        channels = np.column_stack([numeric[c] for c in names])
    else:
        channels = np.zeros((len(target), 0))
    return SeriesTable(
        channels=channels,
        target=target,
        channel_names=names,
        target_name=target_name,
        timestamps=timestamps,
    )


def chronological_split(table: SeriesTable, spec: SplitSpec) -> tuple[range, range, range]:
    """Contiguous train/val/test index ranges; floor rounding, remainder to test."""
    t = table.n_rows
    n_train = int(t * spec.train_frac)
    n_val = int(t * spec.val_frac)
    n_test = t - n_train - n_val
    if n_train < 1 or n_val < 1 or n_test < 1:
        raise ContractError(
            f"split of T={t} rows gives sizes ({n_train}, {n_val}, {n_test}); all must be >= 1"
        )
    return range(0, n_train), range(n_train, n_train + n_val), range(n_train + n_val, t)


def standardize(table: SeriesTable, train_range: range) -> tuple[SeriesTable, Standardization]:
    """Standardize all rows using statistics of the train range only.

    Population standard deviation, floored at 1e-8 so constant channels
    come out as exact zeros.
    """
    t = table.n_rows
    if len(train_range) < 1:
        raise ContractError("train range is empty")
    if train_range.start < 0 or train_range.stop > t:
        raise ContractError(f"train range {train_range} outside [0, {t})")

    train_rows = table.channels[train_range.start:train_range.stop]
    ch_mean = train_rows.mean(axis=0) if table.n_channels else np.zeros(0)
    ch_std = train_rows.std(axis=0) if table.n_channels else np.zeros(0)
    ch_std = np.maximum(ch_std, STD_FLOOR)
    tgt_train = table.target[train_range.start:train_range.stop]
    tgt_mean = float(tgt_train.mean())
    tgt_std = max(float(tgt_train.std()), STD_FLOOR)

    std_channels = (table.channels - ch_mean) / ch_std
    std_target = (table.target - tgt_mean) / tgt_std
    if table.target_in_channels:
        # the appended column is the target: use the target stats for it so
        # the copy stays bitwise verbatim (2-D and 1-D reductions can differ
        # by a ulp otherwise)
        ch_mean[-1] = tgt_mean
        ch_std[-1] = tgt_std
        std_channels[:, -1] = std_target

    stats = Standardization(ch_mean, ch_std, tgt_mean, tgt_std)
    out = SeriesTable(
        channels=std_channels,
        target=std_target,
        channel_names=list(table.channel_names),
        target_name=table.target_name,
        timestamps=table.timestamps,
        target_in_channels=table.target_in_channels,
    )
    return out, stats


def make_windows(
    table: SeriesTable,
    split_range: range,
    lookback: int,
    label_len: int,
    horizon: int,
) -> list[WindowBatch]:
    """Slide a lookback+horizon window over one split range.

    Windows stay strictly inside the range: count = len - L - F + 1.
    """
    if lookback < 1 or horizon < 1:
        raise ContractError(f"lookback and horizon must be >= 1, got {lookback}, {horizon}")
    if not 0 <= label_len <= lookback:
        raise ContractError(f"label_len must lie in [0, {lookback}], got {label_len}")
    n = len(split_range)
    count = n - lookback - horizon + 1
    if count < 1:
        raise InsufficientDataError(
            f"range of {n} rows cannot fit lookback {lookback} + horizon {horizon}; "
            f"needs at least {lookback + horizon}"
        )
    c = table.n_channels
    windows = []
    for i in range(count):
        s = split_range.start + i
        enc = table.channels[s:s + lookback].copy()
        dec = np.zeros((label_len + horizon, c))
        if label_len:
            dec[:label_len] = table.channels[s + lookback - label_len:s + lookback]
        tgt = table.target[s + lookback:s + lookback + horizon].copy()
        enc_tgt = table.target[s:s + lookback].copy()
        for arr in (enc, dec, tgt, enc_tgt):
            arr.setflags(write=False)
        windows.append(WindowBatch(enc, dec, tgt, enc_tgt))
    return windows


def stack_windows(windows: list[WindowBatch]) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Stack a window list into batch arrays (enc, dec, horizon, enc_target)."""
    if not windows:
        raise ContractError("no windows to stack")
    enc = np.stack([w.encoder_input for w in windows])
    dec = np.stack([w.decoder_seed for w in windows])
    tgt = np.stack([w.horizon_target for w in windows])
    enc_tgt = np.stack([w.encoder_target for w in windows])
    return enc, dec, tgt, enc_tgt


def reduce_with_pca(table: SeriesTable, model: pca_mod.PcaModel, append_target: bool = True) -> SeriesTable:
    """Replace channels by their PCA scores; optionally append the target.

    The target series itself is carried over untouched (bit-identical).
    """
    if table.target_in_channels:
        raise ContractError("table already carries an appended target channel")
    if model.n_channels != table.n_channels:
        raise ContractError(
            f"model was fitted on {model.n_channels} channels, table has {table.n_channels}"
        )
    if model.channel_names is not None and model.channel_names != table.channel_names:
        raise ContractError(
            f"channel names differ: model {model.channel_names} vs table {table.channel_names}"
        )
    scores = pca_mod.transform(model, table.channels)
    names = [f"pc{i + 1}" for i in range(model.n_components)]
    if append_target:
        channels = np.column_stack([scores, table.target])
        names = names + [table.target_name]
    else:
        channels = scores
    return SeriesTable(
        channels=channels,
        target=table.target,
        channel_names=names,
        target_name=table.target_name,
        timestamps=table.timestamps,
        target_in_channels=append_target,
    )


def with_target_channel(table: SeriesTable) -> SeriesTable:
    """Control-path analogue of append_target: channels plus the raw target."""
    if table.target_in_channels:
        raise ContractError("table already carries an appended target channel")
    return SeriesTable(
        channels=np.column_stack([table.channels, table.target]),
        target=table.target,
        channel_names=list(table.channel_names) + [table.target_name],
        target_name=table.target_name,
        timestamps=table.timestamps,
        target_in_channels=True,
    )
