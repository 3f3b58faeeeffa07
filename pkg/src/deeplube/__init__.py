"""Deep lower-upper bound interval predictor: LSTM + fully connected stack trained by RMSprop."""

from .dataio import NormalizationSpec, RawSeries, WindowedDataset, load_series, normalize, split, synth_series, window
from .metrics import (
    CwcConfig,
    EvaluationSet,
    MetricReport,
    cwc_original,
    cwc_proposed,
    cwc_surface,
    evaluate,
    improvement_ratio,
    nad,
    picp,
    pinaw,
    pinrw,
)
from .network import NetworkDims, ParameterSet, forward, forward_batch, init_params, predict_interval, rank
from .training import (
    LossConfig,
    OptimizerConfig,
    OptimizerState,
    TrainConfig,
    backward,
    batch_gradients,
    check_gradients,
    loss_f1,
    loss_f2,
    rmsprop_step,
    train,
)

__version__ = "0.1.0"
