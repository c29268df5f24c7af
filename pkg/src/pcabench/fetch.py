"""Benchmark dataset acquisition and structural validation.

ETTh1 is fetched straight from its maintainers' repository. The other
three corpora are distributed through shared-drive archives without
stable direct URLs, so they must be placed locally; fetch then validates
the placement. Every acquired file is structurally checked (row count,
column count, date column, target presence) and its sha256 is recorded.
"""

from __future__ import annotations

import hashlib
import json
import os
import shutil
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Optional

import pandas as pd

from .errors import ContractError, DataError

ETTH1_URL = "https://raw.githubusercontent.com/zhouhaoyi/ETDataset/main/ETT-small/ETTh1.csv"


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    filename: str
    n_rows: int
    n_data_cols: int  # numeric columns including the target, excluding date
    target: str
    url: Optional[str] = None
    sha256: Optional[str] = None
    note: str = ""


DATASETS = {
    "ETTh1": DatasetSpec(
        name="ETTh1", filename="ETTh1.csv", n_rows=17420, n_data_cols=7,
        target="OT", url=ETTH1_URL,
        note="electricity transformer temperature, hourly"),
    "Weather": DatasetSpec(
        name="Weather", filename="weather.csv", n_rows=52696, n_data_cols=21,
        target="OT",
        note="distributed via the Autoformer benchmark archive; no stable "
             "direct URL, place the file manually"),
    "Electricity": DatasetSpec(
        name="Electricity", filename="electricity.csv", n_rows=26304,
        n_data_cols=321, target="OT",
        note="distributed via the Autoformer benchmark archive; no stable "
             "direct URL, place the file manually"),
    "Traffic": DatasetSpec(
        name="Traffic", filename="traffic.csv", n_rows=17544, n_data_cols=862,
        target="OT",
        note="distributed via the Autoformer benchmark archive; no stable "
             "direct URL, place the file manually"),
}

SEARCH_ENV = "PCABENCH_DATA"


def sha256_of(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def validate_file(spec: DatasetSpec, path: str) -> dict:
    """Structural check against the spec; returns facts about the file."""
    if not os.path.exists(path):
        raise DataError(f"{spec.name}: no file at {path}")
    try:
        header = pd.read_csv(path, nrows=0)
    except pd.errors.EmptyDataError:
        raise DataError(f"{spec.name}: {path} is empty") from None
    cols = list(header.columns)
    if not cols or cols[0] != "date":
        raise DataError(f"{spec.name}: first column must be 'date', got {cols[:1]}")
    data_cols = cols[1:]
    if len(data_cols) != spec.n_data_cols:
        raise DataError(
            f"{spec.name}: expected {spec.n_data_cols} data columns, found {len(data_cols)}")
    if spec.target not in data_cols:
        raise DataError(f"{spec.name}: target column {spec.target!r} missing")
    with open(path, "rb") as f:
        n_rows = sum(1 for _ in f) - 1
    if n_rows != spec.n_rows:
        raise DataError(f"{spec.name}: expected {spec.n_rows} data rows, found {n_rows}")
    return {"name": spec.name, "path": path, "rows": n_rows,
            "data_cols": len(data_cols), "sha256": sha256_of(path)}


def _record_checksum(dest_dir: str, facts: dict) -> None:
    ledger_path = os.path.join(dest_dir, "checksums.json")
    entries = {}
    if os.path.exists(ledger_path):
        with open(ledger_path) as f:
            entries = json.load(f)
    entries[facts["name"]] = {"sha256": facts["sha256"], "rows": facts["rows"]}
    with open(ledger_path, "w") as f:
        json.dump(entries, f, indent=2, sort_keys=True)
        f.write("\n")


def fetch(name: str, dest_dir: str, offline_from: Optional[str] = None,
          timeout: float = 60.0) -> dict:
    """Acquire one dataset into dest_dir and validate it.

    offline_from copies an already-downloaded file instead of touching the
    network. Datasets without a pinned URL require offline_from.
    """
    if name not in DATASETS:
        raise ContractError(f"unknown dataset {name!r}, expected one of {sorted(DATASETS)}")
    spec = DATASETS[name]
    os.makedirs(dest_dir, exist_ok=True)
    dest = os.path.join(dest_dir, spec.filename)

    if offline_from is not None:
        facts = validate_file(spec, offline_from)
        if os.path.abspath(offline_from) != os.path.abspath(dest):
            shutil.copyfile(offline_from, dest)
        facts["path"] = dest
    elif spec.url is None:
        raise DataError(
            f"{spec.name} has no stable direct download URL ({spec.note}). "
            f"Obtain {spec.filename} from the published benchmark archive and "
            f"pass it via --offline-from, or place it at {dest} and re-run "
            f"with --offline-from {dest}.")
    else:
        tmp = dest + ".part"
        try:
            with urllib.request.urlopen(spec.url, timeout=timeout) as resp, \
                    open(tmp, "wb") as out:
                shutil.copyfileobj(resp, out)
        except (urllib.error.URLError, OSError) as exc:
            if os.path.exists(tmp):
                os.remove(tmp)
            raise DataError(
                f"{spec.name}: download from {spec.url} failed ({exc}). "
                f"If this machine is offline, download the file elsewhere and "
                f"pass it via --offline-from.") from None
        try:
            facts = validate_file(spec, tmp)
        except DataError:
            os.remove(tmp)
            raise
        os.replace(tmp, dest)
        facts["path"] = dest
        if spec.sha256 is not None and facts["sha256"] != spec.sha256:
            os.remove(dest)
            raise DataError(
                f"{spec.name}: sha256 mismatch, expected {spec.sha256}, "
                f"got {facts['sha256']}")

    _record_checksum(dest_dir, facts)
    return facts


def find_dataset(name: str, extra_dirs: Optional[list] = None) -> Optional[str]:
    """Locate a validated local copy; returns its path or None.

    Searches $PCABENCH_DATA, then ./data, then any extra_dirs. A file that
    exists but fails structural validation is skipped.
    """
    if name not in DATASETS:
        raise ContractError(f"unknown dataset {name!r}, expected one of {sorted(DATASETS)}")
    spec = DATASETS[name]
    candidates = []
    env = os.environ.get(SEARCH_ENV)
    if env:
        candidates.append(env)
    candidates.append("data")
    candidates.extend(extra_dirs or [])
    for d in candidates:
        path = os.path.join(d, spec.filename)
        if os.path.exists(path):
            try:
                validate_file(spec, path)
            except DataError:
                continue
            return path
    return None
