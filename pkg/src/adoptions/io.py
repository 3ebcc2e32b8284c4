"""CSV ingestion and report serialization."""

from __future__ import annotations

import csv
import json
import math
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable

import numpy as np

from adoptions.errors import DataError
from adoptions.model import PriceSeries

SECONDS_PER_YEAR = 365 * 86400
SPACING_RTOL = 1e-9
HEADER = ("timestamp", "price")


def parse_timestamp(text: str) -> float:
    """Epoch seconds from either a number or an ISO-8601 string (naive means UTC)."""
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        pass
    stamp = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    return stamp.timestamp()


def ingest_csv(path) -> PriceSeries:
    """Read a ``timestamp,price`` CSV into a PriceSeries.

    The time step is inferred from the spacing: daily rows give 1/365 and
    hourly rows 1/8760, both in years.
    """
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise DataError(f"{path}: cannot open ({exc.strerror})") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip().lower() for h in header) != HEADER:
            raise DataError(f"{path}:1: expected header 'timestamp,price', got {header!r}")
        stamps, prices = [], []
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 2:
                raise DataError(f"{path}:{line}: expected 2 fields, got {len(row)}")
            try:
                ts = parse_timestamp(row[0])
                px = float(row[1])
            except ValueError as exc:
                raise DataError(f"{path}:{line}: cannot parse row {row!r} ({exc})") from exc
            if not math.isfinite(px) or px <= 0:
                raise DataError(f"{path}:{line}: price must be positive, got {row[1].strip()!r}")
            stamps.append(ts)
            prices.append(px)
    if len(prices) < 2:
        raise DataError(f"{path}: need at least 2 price rows, got {len(prices)}")
    ts = np.array(stamps)
    gaps = np.diff(ts)
    step = gaps[0]
    if step <= 0:
        raise DataError(f"{path}: timestamps must be strictly increasing (rows 2-3)")
    bad = np.flatnonzero(~np.isclose(gaps, step, rtol=SPACING_RTOL, atol=0))
    if bad.size:
        i = int(bad[0])
        raise DataError(
            f"{path}: non-uniform spacing: gap of {gaps[i]:g}s between data rows {i + 1} and "
            f"{i + 2} (file lines {i + 2}-{i + 3}); expected {step:g}s"
        )
    dt = float(step) / SECONDS_PER_YEAR
    years = (ts - ts[0]) / SECONDS_PER_YEAR
    # rebuild on an exact grid so PriceSeries' spacing check sees no rounding noise
    return PriceSeries(years[0] + dt * np.arange(len(prices)), np.array(prices), dt)


def write_series_csv(path, prices: Iterable[float], step_seconds: float, start: float = 0.0):
    """Write prices as a ``timestamp,price`` CSV with epoch-second timestamps."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HEADER)
        for i, px in enumerate(prices):
            stamp = start + i * step_seconds
            writer.writerow([repr(int(stamp)) if float(stamp).is_integer() else repr(stamp),
                             repr(float(px))])


def to_jsonable(obj):
    """Plain-Python copy of ``obj``; non-finite floats become None."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else None
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps_report(report: dict) -> str:
    """Deterministic JSON: sorted keys, fixed indentation, no NaN."""
    return json.dumps(to_jsonable(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_rows_csv(path, rows: list, columns: Iterable[str]) -> None:
    columns = list(columns)
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_csv_cell(row.get(c)) for c in columns])


def _csv_cell(value):
    value = to_jsonable(value)
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return value
