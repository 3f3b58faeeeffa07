"""Plain-loop forward pass used as an oracle.

Written independently of :mod:`deeplube.network` (no shared helpers, one
sample at a time, explicit per-unit sums) and parameterised by dtype so the
finite-difference check can run in extended precision.
"""

from __future__ import annotations

import numpy as np


def _sig(v):
    return 1 / (1 + np.exp(-v))


def reference_forward(arrays: dict[str, np.ndarray], n_fc: int, x, dtype=np.longdouble):
    """Return ``(u, l)`` for one lag window ``x`` of shape (R,) or (R, D)."""
    A = {k: np.asarray(v, dtype=dtype) for k, v in arrays.items()}
    x = np.asarray(x, dtype=dtype)
    if x.ndim == 1:
        x = x[:, None]
    hidden = A["b_f"].shape[0]
    zero = dtype(0)
    C = [zero] * hidden
    H = [zero] * hidden
    for r in range(x.shape[0]):
        act = {}
        for g in "fioc":
            Wh, Wx, b = A[f"W_{g}h"], A[f"W_{g}x"], A[f"b_{g}"]
            row = []
            for j in range(hidden):
                s = b[j]
                for k in range(hidden):
                    s = s + Wh[j, k] * H[k]
                for k in range(x.shape[1]):
                    s = s + Wx[j, k] * x[r, k]
                row.append(np.tanh(s) if g == "c" else _sig(s))
            act[g] = row
        C = [act["f"][j] * C[j] + act["i"][j] * act["c"][j] for j in range(hidden)]
        H = [act["o"][j] * np.tanh(C[j]) for j in range(hidden)]
    z = H
    for k in range(1, n_fc + 1):
        W, b = A[f"W_v{k}"], A[f"b_v{k}"]
        out = []
        for j in range(W.shape[1]):
            s = -b[j]
            for i in range(W.shape[0]):
                s = s + z[i] * W[i, j]
            out.append(s if k == n_fc or s > 0 else zero)
        z = out
    return z[0], z[1]
