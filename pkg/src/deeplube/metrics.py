"""Prediction-interval quality indices, CWC variants and the improvement ratio."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

log = logging.getLogger(__name__)

CwcVariant = Literal["original", "proposed"]


class CwcConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    mu: float = Field(0.9, gt=0, le=1)
    eta: float = Field(15.0, gt=0)
    alpha: float = Field(0.1, ge=0)
    beta: float = Field(6.0, gt=0)


@dataclass
class EvaluationSet:
    """Observed values with their bounds; ``A`` defaults to ``max(y) - min(y)``."""

    y: np.ndarray
    L: np.ndarray
    U: np.ndarray
    A: float | None = None

    def __post_init__(self) -> None:
        self.y = np.atleast_1d(np.asarray(self.y, dtype=np.float64))
        self.L = np.atleast_1d(np.asarray(self.L, dtype=np.float64))
        self.U = np.atleast_1d(np.asarray(self.U, dtype=np.float64))
        if not (self.y.shape == self.L.shape == self.U.shape) or self.y.ndim != 1:
            raise ValueError("y, L and U must be 1-d arrays of equal length")
        if len(self.y) == 0:
            raise ValueError("evaluation set is empty")
        if np.any(self.U < self.L):
            raise ValueError(f"upper bound below lower bound at index {int(np.argmax(self.U < self.L))}")
        if self.A is None:
            self.A = float(self.y.max() - self.y.min())

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def widths(self) -> np.ndarray:
        return self.U - self.L

    @property
    def covered(self) -> np.ndarray:
        return (self.y >= self.L) & (self.y <= self.U)


def _check_range(A: float) -> None:
    if not A > 0:
        raise ValueError(f"target range A must be positive, got {A}")


def picp(es: EvaluationSet) -> float:
    """Fraction of observations inside the closed interval [L, U]."""
    return float(np.mean(es.covered))


def pinaw(es: EvaluationSet) -> float:
    _check_range(es.A)
    return float(np.sum(es.widths) / (es.n * es.A))


def pinrw(es: EvaluationSet) -> float:
    _check_range(es.A)
    return float(np.sqrt(np.mean(es.widths**2)) / es.A)


def nad(es: EvaluationSet) -> float:
    """Mean escape distance of uncovered points, in units of the mean width.

    Returns ``inf`` if some point is uncovered while every interval has zero width.
    """
    below = np.clip(es.L - es.y, 0.0, None)
    above = np.clip(es.y - es.U, 0.0, None)
    escape = below + above
    if not escape.any():
        return 0.0
    mean_width = float(np.mean(es.widths))
    if mean_width == 0.0:
        log.warning("uncovered points with zero mean interval width: NAD is infinite")
        return math.inf
    return float(np.mean(escape / mean_width))


def cwc_original(picp_value, pinaw_value, cfg: CwcConfig = CwcConfig()):
    """Width plus an exponential shortfall penalty when coverage < mu."""
    p = np.asarray(picp_value, dtype=np.float64)
    w = np.asarray(pinaw_value, dtype=np.float64)
    out = np.where(p >= cfg.mu, w, w + np.exp(-cfg.eta * (p - cfg.mu)))
    return float(out) if out.ndim == 0 else out


def cwc_proposed(picp_value, pinaw_value, cfg: CwcConfig = CwcConfig()):
    """Scaled width, multiplied by ``1 + exp(...)`` when coverage < mu."""
    p = np.asarray(picp_value, dtype=np.float64)
    w = np.asarray(pinaw_value, dtype=np.float64)
    out = np.where(
        p >= cfg.mu,
        cfg.beta * w,
        (cfg.alpha + cfg.beta * w) * (1.0 + np.exp(-cfg.eta * (p - cfg.mu))),
    )
    return float(out) if out.ndim == 0 else out


CWC = {"original": cwc_original, "proposed": cwc_proposed}


def improvement_ratio(v_a: float, v_b: float) -> float:
    """Percentage by which ``v_b`` improves on ``v_a``."""
    if v_a == 0:
        raise ZeroDivisionError("reference value v_a is zero")
    return (v_a - v_b) / v_a * 100.0


def cwc_surface(cfg: CwcConfig, variant: CwcVariant, picp_grid, pinaw_grid) -> np.ndarray:
    """Rows ``(picp, pinaw, cwc)`` over the grid, picp-major."""
    pg = np.asarray(picp_grid, dtype=np.float64).ravel()
    wg = np.asarray(pinaw_grid, dtype=np.float64).ravel()
    if pg.size == 0 or wg.size == 0:
        raise ValueError("empty grid")
    P, W = np.meshgrid(pg, wg, indexing="ij")
    vals = CWC[variant](P, W, cfg)
    return np.column_stack([P.ravel(), W.ravel(), np.asarray(vals).ravel()])


@dataclass
class MetricReport:
    picp: float
    pinaw: float
    pinrw: float
    nad: float
    cwc_original: float
    cwc_proposed: float
    train_time_seconds: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(es: EvaluationSet, cfg: CwcConfig = CwcConfig(), train_time: float | None = None) -> MetricReport:
    p, w = picp(es), pinaw(es)
    return MetricReport(
        picp=p,
        pinaw=w,
        pinrw=pinrw(es),
        nad=nad(es),
        cwc_original=cwc_original(p, w, cfg),
        cwc_proposed=cwc_proposed(p, w, cfg),
        train_time_seconds=None if train_time is None else round(train_time, 3),
    )


# -- file formats ----------------------------------------------------------


def write_predictions(path, index, y, L, U) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "y", "L", "U"])
        for row in zip(index, y, L, U):
            w.writerow([int(row[0])] + [format(float(v), ".17g") for v in row[1:]])


def read_predictions(path):
    """Read an ``index,y,L,U`` file; returns ``(index, y, L, U)`` arrays."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"predictions file not found: {path}")
    idx, cols = [], ([], [], [])
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row or not any(c.strip() for c in row):
                continue
            if lineno == 1 and row[0].strip().lower() == "index":
                continue
            if len(row) != 4:
                raise ValueError(f"{path}: row {lineno}: expected 4 fields, got {len(row)}")
            try:
                idx.append(int(row[0]))
                vals = [float(v) for v in row[1:]]
            except ValueError:
                raise ValueError(f"{path}: row {lineno}: malformed number in {row!r}") from None
            if not all(math.isfinite(v) for v in vals):
                raise ValueError(f"{path}: row {lineno}: non-finite value")
            for c, v in zip(cols, vals):
                c.append(v)
    if not idx:
        raise ValueError(f"{path}: no prediction rows")
    return (np.array(idx), *(np.array(c) for c in cols))


def write_surface(path, rows: np.ndarray) -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write("picp,pinaw,cwc\n")
        for p, w, c in rows:
            fh.write(f"{p:.17g},{w:.17g},{c:.17g}\n")
