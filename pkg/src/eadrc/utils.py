from __future__ import annotations

import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable

import numpy as np
import pandas as pd
import yaml

from .errors import ConfigError, InvalidParameters

UTC = timezone.utc  # alias of datetime.UTC (3.11+)


REPO_ROOT = Path(__file__).resolve().parents[2]
DEFAULT_OUT_DIR = REPO_ROOT / "data" / "runs"
CSV_FLOAT_FORMAT = "%.12g"


def utc_now() -> datetime:
    return datetime.now(UTC)


def ensure_dir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


def isoformat_utc(dt: datetime | None) -> str | None:
    if dt is None:
        return None
    return dt.astimezone(UTC).replace(microsecond=0).isoformat().replace("+00:00", "Z")


def load_yaml(path: Path) -> dict[str, Any]:
    with path.open("r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"YAML config must be a mapping: {path}")
    return data


def save_yaml(path: Path, data: dict[str, Any]) -> None:
    ensure_dir(path.parent)
    with path.open("w", encoding="utf-8") as fh:
        yaml.safe_dump(data, fh, sort_keys=False, allow_unicode=False)


def append_ndjson(path: Path, record: dict[str, Any]) -> None:
    ensure_dir(path.parent)
    with path.open("a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True))
        fh.write("\n")


def dataframe_to_parquet(df: pd.DataFrame, path: Path) -> None:
    ensure_dir(path.parent)
    df.to_parquet(path, index=False)


def dataframe_to_csv(df: pd.DataFrame, path: Path) -> None:
    ensure_dir(path.parent)
    df.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")


def is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def log_grid(lo: float, hi: float, n_points: int) -> np.ndarray:
    if lo <= 0 or hi <= lo:
        raise InvalidParameters(f"Frequency range must satisfy 0 < lo < hi, got [{lo}, {hi}]")
    if n_points < 2:
        raise InvalidParameters(f"n_points must be >= 2, got {n_points}")
    return np.logspace(np.log10(lo), np.log10(hi), int(n_points))


def max_relative_deviation(actual: np.ndarray, reference: np.ndarray) -> float:
    actual = np.asarray(actual)
    reference = np.asarray(reference)
    scale = np.maximum(np.abs(reference), np.finfo(float).tiny)
    return float(np.max(np.abs(actual - reference) / scale)) if reference.size else 0.0


def coefficient_deviation(a: Iterable[float], b: Iterable[float]) -> float:
    """Max absolute coefficient difference relative to the largest reference coefficient."""
    a_arr = np.asarray(list(a), dtype=float)
    b_arr = np.asarray(list(b), dtype=float)
    n = max(a_arr.size, b_arr.size)
    a_arr = np.pad(a_arr, (0, n - a_arr.size))
    b_arr = np.pad(b_arr, (0, n - b_arr.size))
    scale = float(np.max(np.abs(b_arr))) if n else 0.0
    if scale == 0.0:
        return float(np.max(np.abs(a_arr))) if n else 0.0
    return float(np.max(np.abs(a_arr - b_arr)) / scale)


def format_coeffs(coeffs: Iterable[float], digits: int = 8) -> str:
    return "[" + ", ".join(f"{c:.{digits}g}" for c in coeffs) + "]"
