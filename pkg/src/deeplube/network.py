"""LSTM chain -> fully connected stack -> rank-ordered (U, L) terminal.

Everything is float64 and batched along the leading axis. Gate arrays follow
the ``W·H + W·x + b`` convention; fully connected layers compute
``z = act(I @ W - b)`` with the bias subtracted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

GATES = ("f", "i", "o", "c")
PARAMS_FORMAT = "deeplube-params"


class NetworkDims(BaseModel):
    """Layer sizes. ``fc_hidden`` lists the ReLU layers; the linear 2-unit output is implicit."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    input_dim: int = Field(1, ge=1)
    hidden: int = Field(64, ge=1)
    fc_hidden: tuple[int, ...] = (32, 16, 8)

    def fc_widths(self) -> list[tuple[int, int]]:
        sizes = [self.hidden, *self.fc_hidden, 2]
        return list(zip(sizes[:-1], sizes[1:]))


def param_shapes(dims: NetworkDims) -> dict[str, tuple[int, ...]]:
    H, D = dims.hidden, dims.input_dim
    shapes: dict[str, tuple[int, ...]] = {}
    for g in GATES:
        shapes[f"W_{g}h"] = (H, H)
    for g in GATES:
        shapes[f"W_{g}x"] = (H, D)
    for g in GATES:
        shapes[f"b_{g}"] = (H,)
    for k, (fan_in, fan_out) in enumerate(dims.fc_widths(), start=1):
        shapes[f"W_v{k}"] = (fan_in, fan_out)
        shapes[f"b_v{k}"] = (fan_out,)
    return shapes


class DimensionError(ValueError):
    pass


@dataclass
class ParameterSet:
    dims: NetworkDims
    arrays: dict[str, np.ndarray]

    def __post_init__(self) -> None:
        expected = param_shapes(self.dims)
        if list(self.arrays) != list(expected):
            raise DimensionError(f"parameter names {list(self.arrays)} do not match {list(expected)}")
        for name, shape in expected.items():
            arr = self.arrays[name]
            if arr.shape != shape:
                raise DimensionError(f"{name}: shape {arr.shape}, expected {shape}")
            if arr.dtype != np.float64:
                self.arrays[name] = arr.astype(np.float64)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    @property
    def n_fc(self) -> int:
        return len(self.dims.fc_hidden) + 1

    def fc_layer(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        return self.arrays[f"W_v{k}"], self.arrays[f"b_v{k}"]

    def copy(self) -> "ParameterSet":
        return ParameterSet(self.dims, {k: v.copy() for k, v in self.arrays.items()})

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.arrays.items()}

    def size(self) -> int:
        return sum(v.size for v in self.arrays.values())

    def is_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self.arrays.values())

    @classmethod
    def zeros(cls, dims: NetworkDims) -> "ParameterSet":
        return cls(dims, {k: np.zeros(s) for k, s in param_shapes(dims).items()})

    def to_dict(self) -> dict:
        return {
            "format": PARAMS_FORMAT,
            "version": 1,
            "dims": self.dims.model_dump(mode="json"),
            "arrays": {
                k: {"shape": list(v.shape), "data": v.ravel(order="C").tolist()}
                for k, v in self.arrays.items()
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ParameterSet":
        if doc.get("format") != PARAMS_FORMAT:
            raise ValueError(f"not a parameter document (format={doc.get('format')!r})")
        dims = NetworkDims(**doc["dims"])
        arrays = {
            k: np.array(v["data"], dtype=np.float64).reshape(v["shape"]) for k, v in doc["arrays"].items()
        }
        return cls(dims, arrays)

    def save(self, path: str | Path) -> None:
        # json writes floats with repr(), which round-trips float64 exactly
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ParameterSet":
        return cls.from_dict(json.loads(Path(path).read_text()))


def init_params(dims: NetworkDims, seed: int = 0) -> ParameterSet:
    """Glorot-uniform weights, zero biases except the forget-gate bias (1.0)."""
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in param_shapes(dims).items():
        if name.startswith("b_"):
            arrays[name] = np.ones(shape) if name == "b_f" else np.zeros(shape)
            continue
        if name.startswith("W_v"):
            fan_in, fan_out = shape
        else:
            fan_out, fan_in = shape
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        arrays[name] = rng.uniform(-bound, bound, size=shape)
    return ParameterSet(dims, arrays)


def sigmoid(v):
    v = np.asarray(v, dtype=np.float64)
    # split by sign so exp never overflows
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def tanh(v):
    return np.tanh(np.asarray(v, dtype=np.float64))


def relu(v):
    return np.maximum(np.asarray(v, dtype=np.float64), 0.0)


@dataclass
class CellState:
    C: np.ndarray
    H: np.ndarray

    @classmethod
    def zeros(cls, hidden: int, batch: int | None = None) -> "CellState":
        shape = (hidden,) if batch is None else (batch, hidden)
        return cls(np.zeros(shape), np.zeros(shape))


def lstm_step(params: ParameterSet, prev: CellState, x_r) -> tuple[CellState, dict[str, np.ndarray]]:
    """One cell update. Works on a single vector or a batch (leading axis)."""
    p = params.arrays
    x_r = np.asarray(x_r, dtype=np.float64)
    H_prev = np.asarray(prev.H, dtype=np.float64)
    if x_r.shape[-1] != params.dims.input_dim or H_prev.shape[-1] != params.dims.hidden:
        raise DimensionError(
            f"input width {x_r.shape[-1]} / state width {H_prev.shape[-1]} "
            f"do not match dims ({params.dims.input_dim}, {params.dims.hidden})"
        )
    pre = {g: H_prev @ p[f"W_{g}h"].T + x_r @ p[f"W_{g}x"].T + p[f"b_{g}"] for g in GATES}
    gates = {
        "f": sigmoid(pre["f"]),
        "i": sigmoid(pre["i"]),
        "o": sigmoid(pre["o"]),
        "c": tanh(pre["c"]),
    }
    C = gates["f"] * prev.C + gates["i"] * gates["c"]
    H = gates["o"] * np.tanh(C)
    return CellState(C, H), gates


def fc_forward(params: ParameterSet, inp) -> tuple[np.ndarray, np.ndarray, list[tuple[np.ndarray, np.ndarray]]]:
    """Returns ``(u, l, layers)`` where ``layers`` holds (pre-activation, output) per layer."""
    z = np.asarray(inp, dtype=np.float64)
    if z.shape[-1] != params.dims.hidden:
        raise DimensionError(f"fc input width {z.shape[-1]}, expected {params.dims.hidden}")
    layers = []
    n = params.n_fc
    for k in range(1, n + 1):
        W, b = params.fc_layer(k)
        pre = z @ W - b
        z = pre if k == n else relu(pre)
        layers.append((pre, z))
    return z[..., 0], z[..., 1], layers


def rank(u, l):
    """``(U, L) = (max(u, l), min(u, l))``."""
    return np.maximum(u, l), np.minimum(u, l)


@dataclass
class ForwardTrace:
    """Activations of a batched forward pass.

    ``C[r]``/``H[r]`` are the states after cell r (index 0 is the initial
    state); ``gates[g][r-1]`` is gate g of cell r.
    """

    x: np.ndarray  # (B, R, D)
    gates: dict[str, np.ndarray]  # g -> (R, B, H)
    C: np.ndarray  # (R+1, B, H)
    H: np.ndarray  # (R+1, B, H)
    fc: list[tuple[np.ndarray, np.ndarray]]

    @property
    def cells(self) -> int:
        return self.x.shape[1]

    @property
    def u(self) -> np.ndarray:
        return self.fc[-1][1][:, 0]

    @property
    def l(self) -> np.ndarray:
        return self.fc[-1][1][:, 1]


def _as_batch(x, input_dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim == 2:
        if input_dim != 1:
            raise DimensionError(f"2-d input needs input_dim 1, dims say {input_dim}")
        x = x[..., None]
    if x.ndim != 3 or x.shape[2] != input_dim:
        raise DimensionError(f"cannot interpret input of shape {x.shape}")
    return x


def forward_batch(params: ParameterSet, x, initial: CellState | None = None) -> ForwardTrace:
    """Run a batch of lag windows, shape (B, R) or (B, R, D)."""
    x = _as_batch(x, params.dims.input_dim)
    B, R, _ = x.shape
    Hd = params.dims.hidden
    state = initial if initial is not None else CellState.zeros(Hd, B)
    C0 = np.broadcast_to(np.asarray(state.C, dtype=np.float64), (B, Hd))
    H0 = np.broadcast_to(np.asarray(state.H, dtype=np.float64), (B, Hd))
    Cs = np.empty((R + 1, B, Hd))
    Hs = np.empty((R + 1, B, Hd))
    Cs[0], Hs[0] = C0, H0
    gates = {g: np.empty((R, B, Hd)) for g in GATES}
    state = CellState(Cs[0], Hs[0])
    for r in range(R):
        state, acts = lstm_step(params, state, x[:, r, :])
        for g in GATES:
            gates[g][r] = acts[g]
        Cs[r + 1], Hs[r + 1] = state.C, state.H
    _, _, layers = fc_forward(params, Hs[R])
    return ForwardTrace(x, gates, Cs, Hs, layers)


def forward(params: ParameterSet, x, initial: CellState | None = None) -> tuple[float, float, ForwardTrace]:
    """Single R-lag sample; returns the unranked pair ``(u, l)`` and the trace."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != (1 if params.dims.input_dim == 1 else 2):
        raise DimensionError(f"expected one sample, got shape {x.shape}")
    trace = forward_batch(params, x[None, ...], initial)
    return float(trace.u[0]), float(trace.l[0]), trace


def predict_interval(params: ParameterSet, x) -> tuple[np.ndarray, np.ndarray]:
    """Forward a batch and rank the outputs; returns ``(L, U)``."""
    trace = forward_batch(params, x)
    U, L = rank(trace.u, trace.l)
    return L, U
