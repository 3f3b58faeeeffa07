"""Series ingestion, scaling, sliding windows and chronological splits."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

NormMode = Literal["minmax", "none"]
SynthKind = Literal["sine-uniform", "sine-gaussian"]

POINTS_PER_DAY = 144  # 10-min resolution
WEEK_TRAIN_FRACTION = 5 / 7


class DataError(ValueError):
    """Raised for unreadable or invalid input data."""


@dataclass
class RawSeries:
    values: np.ndarray
    timestamps: list[str] | None = None

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise DataError("series must be one-dimensional")
        if len(self.values) < 2:
            raise DataError(f"series needs at least 2 points, got {len(self.values)}")
        bad = np.flatnonzero(~np.isfinite(self.values))
        if bad.size:
            raise DataError(f"non-finite value at position {int(bad[0])}")
        if self.timestamps is not None and len(self.timestamps) != len(self.values):
            raise DataError("timestamps and values differ in length")

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class NormalizationSpec:
    min: float = 0.0
    max: float = 1.0
    mode: NormMode = "none"

    def __post_init__(self) -> None:
        if self.mode not in ("minmax", "none"):
            raise DataError(f"unknown normalization mode {self.mode!r}")
        if self.mode == "minmax" and not self.max > self.min:
            raise DataError(f"min-max scaling needs max > min (got min={self.min}, max={self.max})")

    @classmethod
    def fit(cls, values: np.ndarray, mode: NormMode = "minmax") -> "NormalizationSpec":
        values = np.asarray(values, dtype=np.float64)
        if values.size == 0:
            raise DataError("cannot fit normalization on an empty series")
        if mode == "none":
            return cls(mode="none")
        lo, hi = float(values.min()), float(values.max())
        if not hi > lo:
            raise DataError("constant series has zero range; min-max scaling undefined")
        return cls(lo, hi, "minmax")

    @property
    def scale(self) -> float:
        return self.max - self.min if self.mode == "minmax" else 1.0

    def apply(self, values):
        values = np.asarray(values, dtype=np.float64)
        if self.mode == "none":
            return values.copy()
        return (values - self.min) / (self.max - self.min)

    def invert(self, values):
        values = np.asarray(values, dtype=np.float64)
        if self.mode == "none":
            return values.copy()
        return values * (self.max - self.min) + self.min

    def to_dict(self) -> dict:
        return {"min": self.min, "max": self.max, "mode": self.mode}


@dataclass
class WindowedDataset:
    """Lag matrix ``x`` (n, R) with next-step targets ``y`` (n,).

    ``positions`` holds the index of each target inside the source series.
    """

    x: np.ndarray
    y: np.ndarray
    lags: int
    norm: NormalizationSpec = field(default_factory=NormalizationSpec)
    positions: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.x.ndim != 2 or self.x.shape[1] != self.lags:
            raise DataError(f"x must have shape (n, {self.lags}), got {self.x.shape}")
        if self.y.shape != (self.x.shape[0],):
            raise DataError("x and y disagree on sample count")
        if self.positions is None:
            self.positions = np.arange(self.lags, self.lags + len(self.y))

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, idx) -> "WindowedDataset":
        return WindowedDataset(self.x[idx], self.y[idx], self.lags, self.norm, self.positions[idx])


def _parse_float(token: str) -> float:
    token = token.strip()
    if not token:
        raise ValueError("empty field")
    return float(token)


def load_series(
    path: str | Path,
    column: str | int = -1,
    time_column: str | int | None = None,
    header: bool | None = None,
) -> RawSeries:
    """Read one numeric column of a comma-separated file.

    ``column`` selects the value column by header name or by position
    (negative positions count from the right). With ``header=None`` the first
    row is treated as a header when its value field is not numeric.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"data file not found: {path}")
    with path.open(newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and any(cell.strip() for cell in row)]
    if not rows:
        raise DataError(f"{path}: no data rows")

    names: list[str] | None = None
    if header is None:
        first = rows[0]
        probe = column if isinstance(column, int) else None
        if probe is None:
            header = True
        else:
            try:
                _parse_float(first[probe])
                header = False
            except (ValueError, IndexError):
                header = True
    if header:
        names = [c.strip() for c in rows[0]]
        rows = rows[1:]
        first_row = 2
    else:
        first_row = 1

    def resolve(spec: str | int) -> int:
        if isinstance(spec, str):
            if names is None or spec not in names:
                raise DataError(f"{path}: no column named {spec!r}")
            return names.index(spec)
        return spec

    vcol = resolve(column)
    tcol = resolve(time_column) if time_column is not None else None

    values = []
    stamps: list[str] | None = [] if tcol is not None else None
    for offset, row in enumerate(rows):
        lineno = first_row + offset
        try:
            v = _parse_float(row[vcol])
        except IndexError:
            raise DataError(f"{path}: row {lineno} has no column {column!r}") from None
        except ValueError:
            raise DataError(f"{path}: row {lineno}: cannot parse {row[vcol]!r} as a number") from None
        if not math.isfinite(v):
            raise DataError(f"{path}: row {lineno}: non-finite value {row[vcol]!r}")
        values.append(v)
        if stamps is not None:
            stamps.append(row[tcol].strip())
    if not values:
        raise DataError(f"{path}: no data rows")
    return RawSeries(np.array(values), stamps)


def write_series(series: RawSeries, path: str | Path) -> None:
    stamps = series.timestamps or [str(i) for i in range(len(series))]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "value"])
        for t, v in zip(stamps, series.values):
            w.writerow([t, format(float(v), ".17g")])


def normalize(series: RawSeries, mode: NormMode = "minmax", spec: NormalizationSpec | None = None):
    """Scale a series to [0, 1]; returns ``(scaled, spec)``.

    Passing a pre-fitted ``spec`` reuses its bounds (e.g. fitted on the
    training portion only).
    """
    if spec is None:
        spec = NormalizationSpec.fit(series.values, mode)
    return RawSeries(spec.apply(series.values), series.timestamps), spec


def window(series: RawSeries | np.ndarray, lags: int, norm: NormalizationSpec | None = None) -> WindowedDataset:
    values = series.values if isinstance(series, RawSeries) else np.asarray(series, dtype=np.float64)
    if lags < 1:
        raise DataError("lag count must be positive")
    n = len(values) - lags
    if n < 1:
        raise DataError(f"series of length {len(values)} too short for {lags} lags")
    x = np.lib.stride_tricks.sliding_window_view(values, lags)[:n].copy()
    y = values[lags:].copy()
    return WindowedDataset(x, y, lags, norm or NormalizationSpec())


def split(dataset: WindowedDataset, boundary: int | float):
    """Chronological split at a sample index, or at a fraction of the samples."""
    n = len(dataset)
    if isinstance(boundary, float):
        if not 0.0 < boundary < 1.0:
            raise DataError(f"split ratio must lie in (0, 1), got {boundary}")
        boundary = int(round(boundary * n))
    if not 0 < boundary < n:
        raise DataError(f"split boundary {boundary} outside (0, {n})")
    return dataset.subset(slice(0, boundary)), dataset.subset(slice(boundary, n))


def train_point_count(length: int, fraction: float = WEEK_TRAIN_FRACTION) -> int:
    """Number of leading raw points used for training (720 of a 1008-point week)."""
    return int(round(length * fraction))


def synth_series(
    kind: SynthKind = "sine-uniform",
    length: int = 1008,
    noise: float = 0.1,
    seed: int = 0,
    period: int = POINTS_PER_DAY,
    amplitude: float = 1.0,
) -> RawSeries:
    """Sinusoid with one cycle per ``period`` steps plus uniform or Gaussian noise.

    For ``sine-uniform`` noise is drawn from U(-noise, noise); for
    ``sine-gaussian`` ``noise`` is the standard deviation.
    """
    if length < 1:
        raise DataError("length must be positive")
    t = np.arange(length)
    clean = amplitude * np.sin(2 * np.pi * t / period)
    rng = np.random.default_rng(seed)
    if kind == "sine-uniform":
        eps = rng.uniform(-noise, noise, size=length) if noise else np.zeros(length)
    elif kind == "sine-gaussian":
        eps = rng.normal(0.0, noise, size=length) if noise else np.zeros(length)
    else:
        raise DataError(f"unknown synthetic kind {kind!r}")
    stamps = [str(np.datetime64("2012-01-01T00:00") + np.timedelta64(10 * int(i), "m")) for i in t]
    return RawSeries(clean + eps, stamps)


def clean_sine(length: int, period: int = POINTS_PER_DAY, amplitude: float = 1.0) -> np.ndarray:
    return amplitude * np.sin(2 * np.pi * np.arange(length) / period)
