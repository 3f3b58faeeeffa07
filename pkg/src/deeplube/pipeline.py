"""Glue between data, training and evaluation used by the command line."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import dataio
from .config import RunConfig
from .dataio import NormalizationSpec, RawSeries, WindowedDataset
from .metrics import EvaluationSet, MetricReport, evaluate
from .network import DimensionError, ParameterSet, init_params, predict_interval
from .training import EpochStats, OptimizerState, train


@dataclass
class PreparedData:
    series: RawSeries
    norm: NormalizationSpec
    train: WindowedDataset
    test: WindowedDataset
    train_points: int


def prepare_data(cfg: RunConfig, series: RawSeries | None = None) -> PreparedData:
    """Load, scale (fit on the training points only), window and split."""
    d = cfg.data
    if series is None:
        if d.path is None:
            raise dataio.DataError("no data file configured (data.path)")
        series = dataio.load_series(d.path, d.column, d.time_column, d.header)
    n_train = dataio.train_point_count(len(series), d.train_fraction)
    if n_train <= d.lags or n_train >= len(series):
        raise dataio.DataError(
            f"{len(series)} points with train fraction {d.train_fraction} leave no room for {d.lags} lags"
        )
    norm = NormalizationSpec.fit(series.values[:n_train], d.normalization)
    ds = dataio.window(norm.apply(series.values), d.lags, norm)
    # a sample belongs to training iff its target is one of the training points
    train_ds, test_ds = dataio.split(ds, n_train - d.lags)
    return PreparedData(series, norm, train_ds, test_ds, n_train)


def predict_rows(params: ParameterSet, ds: WindowedDataset, normalized_units: bool = False):
    """Ranked bounds for every sample: ``(index, y, L, U)``."""
    L, U = predict_interval(params, ds.x)
    y = ds.y
    if not normalized_units:
        y, L, U = ds.norm.invert(y), ds.norm.invert(L), ds.norm.invert(U)
    return ds.positions, y, L, U


def report_for(cfg: RunConfig, y, L, U, train_time: float | None = None) -> MetricReport:
    es = EvaluationSet(y, L, U, cfg.metrics.target_range)
    return evaluate(es, cfg.cwc, train_time)


def check_dims(params: ParameterSet, cfg: RunConfig) -> None:
    if params.dims != cfg.network:
        raise DimensionError(
            f"saved parameters have dims {params.dims.model_dump()}, config says {cfg.network.model_dump()}"
        )


@dataclass
class TrainOutcome:
    params: ParameterSet
    history: list[EpochStats]
    predictions: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]
    report: MetricReport
    elapsed: float


def run_training(cfg: RunConfig, data: PreparedData) -> TrainOutcome:
    params = init_params(cfg.network, cfg.seed)
    state = OptimizerState.create(params, cfg.optimizer)
    t0 = time.perf_counter()
    result = train(params, data.train, cfg.loss, cfg.train, state)
    elapsed = time.perf_counter() - t0
    rows = predict_rows(result.params, data.test, cfg.metrics.normalized_units)
    report = report_for(cfg, *rows[1:], train_time=elapsed if cfg.metrics.record_time else None)
    return TrainOutcome(result.params, result.history, rows, report, elapsed)
