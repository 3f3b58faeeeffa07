"""Dual interval losses, backpropagation through time, RMSprop and the training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .dataio import WindowedDataset
from .network import GATES, ForwardTrace, ParameterSet, forward_batch
from .reference import reference_forward

log = logging.getLogger(__name__)

Gradients = dict[str, np.ndarray]


class LossConfig(BaseModel):
    """Weights of f1/f2 and the outside-band penalty (``lambda`` in JSON)."""

    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True, serialize_by_alias=True)

    k1: float = Field(2.0, ge=0)
    k2: float = Field(1.0, ge=0)
    lam: float = Field(4.0, ge=0, alias="lambda")


class OptimizerConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    rho: float = Field(0.9, ge=0, lt=1)
    eps: float = Field(1e-3, gt=0)
    delta: float = Field(1e-6, gt=0)


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    batch_size: int = Field(32, ge=1)
    epochs: int = Field(200, ge=1)
    seed: int = 0
    shuffle: bool = True
    clip_norm: float | None = Field(None, gt=0)


@dataclass
class OptimizerState:
    rho: float = 0.9
    eps: float = 1e-3
    delta: float = 1e-6
    r: Gradients = field(default_factory=dict)
    t: int = 0

    @classmethod
    def create(cls, params: ParameterSet, cfg: OptimizerConfig | None = None) -> "OptimizerState":
        cfg = cfg or OptimizerConfig()
        return cls(cfg.rho, cfg.eps, cfg.delta, params.zeros_like(), 0)


class NonFiniteGradientError(FloatingPointError):
    pass


# -- losses ---------------------------------------------------------------


def _inside(u, l, y):
    return (y >= np.minimum(u, l)) & (y <= np.maximum(u, l))


def loss_f1(u, l, y, cfg: LossConfig = LossConfig()):
    """Midpoint distance plus an outside-band penalty ``lam * d``."""
    u, l, y = np.broadcast_arrays(*(np.asarray(a, dtype=np.float64) for a in (u, l, y)))
    dist = np.abs(y - (u + l) / 2)
    gamma = np.where(_inside(u, l, y), 0.0, 1.0)
    d = dist - np.abs((u - l) / 2)
    out = cfg.k1 * (dist + cfg.lam * gamma * d)
    return float(out) if out.ndim == 0 else out


def loss_f2(u, l, cfg: LossConfig = LossConfig()):
    out = cfg.k2 * np.abs(np.asarray(u, dtype=np.float64) - np.asarray(l, dtype=np.float64))
    return float(out) if out.ndim == 0 else out


def loss_output_grads(u, l, y, cfg: LossConfig = LossConfig()):
    """Subgradients of f1 and f2 with respect to the raw outputs.

    Returns ``(df1/du, df1/dl, df2/du, df2/dl)``; sign(0) = 0 and the
    indicator is frozen at its forward value.
    """
    u, l, y = np.broadcast_arrays(*(np.asarray(a, dtype=np.float64) for a in (u, l, y)))
    s = np.sign(y - (u + l) / 2)
    t = np.sign(u - l)
    gamma = np.where(_inside(u, l, y), 0.0, 1.0)
    pen = cfg.lam * gamma
    d1u = cfg.k1 * (-s / 2 + pen * (-s / 2 - t / 2))
    d1l = cfg.k1 * (-s / 2 + pen * (-s / 2 + t / 2))
    return d1u, d1l, cfg.k2 * t, -cfg.k2 * t


# -- backpropagation -------------------------------------------------------


def backprop(params: ParameterSet, trace: ForwardTrace, d_out: np.ndarray) -> Gradients:
    """Reverse pass for an output gradient ``d_out`` of shape (B, 2).

    Returns gradients summed over the batch (rows reduced in sample order by
    the matrix products).
    """
    p = params.arrays
    grads = params.zeros_like()
    if d_out.shape != (trace.x.shape[0], 2):
        raise ValueError(f"output gradient shape {d_out.shape} does not match batch")

    # fully connected stack, last layer first
    n = params.n_fc
    G = d_out
    for k in range(n, 0, -1):
        pre, _ = trace.fc[k - 1]
        inp = trace.H[-1] if k == 1 else trace.fc[k - 2][1]
        dpre = G if k == n else G * (pre > 0)
        grads[f"W_v{k}"] = inp.T @ dpre
        grads[f"b_v{k}"] = -dpre.sum(axis=0)
        G = dpre @ p[f"W_v{k}"].T

    # BPTT over the LSTM chain
    dH = G
    dC = np.zeros_like(dH)
    for r in range(trace.cells, 0, -1):
        f, i, o, c = (trace.gates[g][r - 1] for g in GATES)
        tC = np.tanh(trace.C[r])
        dC = dC + dH * o * (1.0 - tC * tC)
        da = {
            "f": dC * trace.C[r - 1] * f * (1.0 - f),
            "i": dC * c * i * (1.0 - i),
            "o": dH * tC * o * (1.0 - o),
            "c": dC * i * (1.0 - c * c),
        }
        H_prev = trace.H[r - 1]
        x_r = trace.x[:, r - 1, :]
        dH = np.zeros_like(dH)
        for g in GATES:
            grads[f"W_{g}h"] += da[g].T @ H_prev
            grads[f"W_{g}x"] += da[g].T @ x_r
            grads[f"b_{g}"] += da[g].sum(axis=0)
            dH += da[g] @ p[f"W_{g}h"]
        dC = dC * f
    return grads


def backward(params: ParameterSet, trace: ForwardTrace, y, cfg: LossConfig = LossConfig()):
    """Gradients of f1 and f2, each summed over the samples in ``trace``."""
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if y.shape != trace.u.shape:
        raise ValueError(f"{y.shape[0]} targets for a trace of {trace.u.shape[0]} samples")
    d1u, d1l, d2u, d2l = loss_output_grads(trace.u, trace.l, y, cfg)
    g1 = backprop(params, trace, np.stack([d1u, d1l], axis=1))
    g2 = backprop(params, trace, np.stack([d2u, d2l], axis=1))
    return g1, g2


@dataclass
class BatchResult:
    g1: Gradients
    g2: Gradients
    g: Gradients
    f1: np.ndarray
    f2: np.ndarray


def _batch_pass(params: ParameterSet, x, y, cfg: LossConfig) -> BatchResult:
    y = np.asarray(y, dtype=np.float64)
    m = len(y)
    if m == 0:
        raise ValueError("empty batch")
    trace = forward_batch(params, x)
    s1, s2 = backward(params, trace, y, cfg)
    g1 = {k: v / m for k, v in s1.items()}
    g2 = {k: v / m for k, v in s2.items()}
    g = {k: g1[k] + g2[k] for k in g1}
    return BatchResult(g1, g2, g, loss_f1(trace.u, trace.l, y, cfg), loss_f2(trace.u, trace.l, cfg))


def batch_gradients(params: ParameterSet, x, y, cfg: LossConfig = LossConfig()):
    """Mean gradients ``(g1, g2, g1 + g2)`` over a batch of m samples."""
    res = _batch_pass(params, x, y, cfg)
    return res.g1, res.g2, res.g


# -- optimizer -------------------------------------------------------------


def clip_by_global_norm(g: Gradients, max_norm: float) -> Gradients:
    norm = np.sqrt(sum(float(np.sum(v * v)) for v in g.values()))
    if norm <= max_norm:
        return g
    scale = max_norm / norm
    return {k: v * scale for k, v in g.items()}


def rmsprop_step(params: ParameterSet, g: Gradients, state: OptimizerState):
    """Elementwise RMSprop update; returns ``(new_params, new_state)``."""
    for name, v in g.items():
        if not np.isfinite(v).all():
            raise NonFiniteGradientError(f"non-finite gradient in {name!r} at update {state.t + 1}")
    if set(g) != set(params.arrays):
        raise ValueError("gradient set does not match parameter set")
    r_prev = state.r or params.zeros_like()
    new_r, new_w = {}, {}
    for name, w in params.arrays.items():
        gk = g[name]
        if gk.shape != w.shape:
            raise ValueError(f"{name}: gradient shape {gk.shape} vs parameter {w.shape}")
        r = state.rho * r_prev[name] + (1.0 - state.rho) * gk * gk
        new_r[name] = r
        new_w[name] = w - (state.eps / (state.delta + np.sqrt(r))) * gk
    new_state = OptimizerState(state.rho, state.eps, state.delta, new_r, state.t + 1)
    return ParameterSet(params.dims, new_w), new_state


# -- training loop ---------------------------------------------------------


@dataclass
class EpochStats:
    epoch: int
    mean_f1: float
    mean_f2: float

    @property
    def mean_total(self) -> float:
        return self.mean_f1 + self.mean_f2


@dataclass
class TrainResult:
    params: ParameterSet
    state: OptimizerState
    history: list[EpochStats]


def train(
    params: ParameterSet,
    data: WindowedDataset,
    loss_cfg: LossConfig = LossConfig(),
    train_cfg: TrainConfig = TrainConfig(),
    state: OptimizerState | None = None,
    epochs: int | None = None,
) -> TrainResult:
    """Mini-batch RMSprop on the summed f1/f2 gradients.

    Losses use the raw (unranked) outputs. Epoch statistics are the sample
    means of the losses seen while sweeping the epoch, before each update.
    ``epochs`` overrides ``train_cfg.epochs`` and may be 0.
    """
    if len(data) == 0:
        raise ValueError("empty training set")
    n_epochs = train_cfg.epochs if epochs is None else epochs
    state = state if state is not None else OptimizerState.create(params)
    if not state.r:
        state = OptimizerState(state.rho, state.eps, state.delta, params.zeros_like(), state.t)
    rng = np.random.default_rng([train_cfg.seed, 1])
    m = train_cfg.batch_size
    history: list[EpochStats] = []
    n = len(data)
    for epoch in range(1, n_epochs + 1):
        order = rng.permutation(n) if train_cfg.shuffle else np.arange(n)
        sum1 = sum2 = 0.0
        for start in range(0, n, m):
            idx = order[start : start + m]
            res = _batch_pass(params, data.x[idx], data.y[idx], loss_cfg)
            sum1 += float(res.f1.sum())
            sum2 += float(res.f2.sum())
            g = res.g
            if train_cfg.clip_norm is not None:
                g = clip_by_global_norm(g, train_cfg.clip_norm)
            params, state = rmsprop_step(params, g, state)
        history.append(EpochStats(epoch, sum1 / n, sum2 / n))
        log.debug("epoch %d f1=%.6f f2=%.6f", epoch, sum1 / n, sum2 / n)
    return TrainResult(params, state, history)


def write_history(history: list[EpochStats], path) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,mean_f1,mean_f2,mean_total\n")
        for h in history:
            fh.write(f"{h.epoch},{h.mean_f1:.17g},{h.mean_f2:.17g},{h.mean_total:.17g}\n")


# -- finite-difference oracle ---------------------------------------------


def relative_error(a, n):
    a, n = np.asarray(a), np.asarray(n)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)


def _ref_losses(u, l, y, cfg: LossConfig):
    mid = (u + l) / 2
    dist = abs(y - mid)
    gamma = 0 if min(u, l) <= y <= max(u, l) else 1
    f1 = cfg.k1 * (dist + cfg.lam * gamma * (dist - abs((u - l) / 2)))
    return f1, cfg.k2 * abs(u - l)


def numeric_gradients(
    params: ParameterSet,
    x,
    y,
    cfg: LossConfig,
    step: float = 1e-5,
    dtype=np.longdouble,
):
    """Central differences of f1 and f2 for every parameter entry (one sample).

    Runs on the loop-based reference forward. The default extended precision
    keeps cancellation error (~eps*|f|/step) well below the truncation error
    at ``step = 1e-5``; pass ``dtype=np.float64`` for a plain double check.
    """
    work = {k: v.astype(dtype) for k, v in params.arrays.items()}
    y = dtype(y)
    h = dtype(step)
    n1, n2 = params.zeros_like(), params.zeros_like()

    def losses():
        u, l = reference_forward(work, params.n_fc, x, dtype)
        return _ref_losses(u, l, y, cfg)

    for name, arr in work.items():
        flat = arr.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            p1, p2 = losses()
            flat[j] = orig - h
            m1, m2 = losses()
            flat[j] = orig
            n1[name].reshape(-1)[j] = (p1 - m1) / (2 * h)
            n2[name].reshape(-1)[j] = (p2 - m2) / (2 * h)
    return n1, n2


@dataclass
class GradientCheckReport:
    tolerance: float
    f1: dict[str, float]
    f2: dict[str, float]

    @property
    def max_error(self) -> float:
        return max(max(self.f1.values()), max(self.f2.values()))

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def failing(self) -> list[str]:
        out = [f"f1:{k}" for k, v in self.f1.items() if not v < self.tolerance]
        return out + [f"f2:{k}" for k, v in self.f2.items() if not v < self.tolerance]

    def to_dict(self) -> dict:
        return {"tolerance": self.tolerance, "passed": self.passed, "max_error": self.max_error,
                "f1": self.f1, "f2": self.f2}


def check_gradients(
    params: ParameterSet,
    x,
    y: float,
    cfg: LossConfig = LossConfig(),
    step: float = 1e-5,
    tolerance: float = 1e-4,
    analytic: tuple[Gradients, Gradients] | None = None,
    dtype=np.longdouble,
) -> GradientCheckReport:
    """Compare analytic gradients (or the supplied ``analytic`` pair) to central differences.

    Reports the max relative error ``|a-n| / max(|a|, |n|, 1e-8)`` per array.
    """
    if analytic is None:
        trace = forward_batch(params, np.asarray(x, dtype=np.float64)[None, ...])
        analytic = backward(params, trace, y, cfg)
    a1, a2 = analytic
    n1, n2 = numeric_gradients(params, x, y, cfg, step, dtype)
    e1 = {k: float(relative_error(a1[k], n1[k]).max()) for k in n1}
    e2 = {k: float(relative_error(a2[k], n2[k]).max()) for k in n2}
    return GradientCheckReport(tolerance, e1, e2)


def kink_margin(params: ParameterSet, x, y: float) -> float:
    """Smallest distance of one sample to any non-differentiable point.

    Covers |y - mid|, the band edges (indicator switch), |u - l| and every
    ReLU pre-activation.
    """
    trace = forward_batch(params, np.asarray(x, dtype=np.float64)[None, ...])
    u, l = trace.u[0], trace.l[0]
    cands = [abs(y - (u + l) / 2), abs(y - u), abs(y - l), abs(u - l)]
    for pre, _ in trace.fc[:-1]:
        cands.append(float(np.abs(pre).min()))
    return float(min(cands))
