"""Adam with lazy updates for sparse embedding rows."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .exceptions import NumericalError

__all__ = ["SparseRows", "AdamState", "adam_step"]


class SparseRows(NamedTuple):
    """Gradient touching only ``rows`` of a 2-D parameter."""

    rows: np.ndarray
    values: np.ndarray


class AdamState:
    """First/second moments per named parameter and the shared step counter."""

    def __init__(self):
        self.m = {}
        self.v = {}
        self.t = 0

    def moments(self, name, like):
        if name not in self.m:
            self.m[name] = np.zeros_like(like)
            self.v[name] = np.zeros_like(like)
        return self.m[name], self.v[name]


def adam_step(params, grads, state, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update, in place.

    ``grads`` maps parameter names to dense arrays or :class:`SparseRows`.
    For sparse gradients only the touched rows have their moments decayed and
    their values moved; untouched rows keep their moments as they were.
    """
    for name, g in grads.items():
        vals = g.values if isinstance(g, SparseRows) else g
        if not np.all(np.isfinite(vals)):
            raise NumericalError(f"non-finite gradient for parameter {name!r} at step {state.t + 1}")
    state.t += 1
    bc1 = 1.0 - beta1**state.t
    bc2 = 1.0 - beta2**state.t
    for name, g in grads.items():
        p = params[name]
        m, v = state.moments(name, p)
        if isinstance(g, SparseRows):
            rows = g.rows
            m[rows] = beta1 * m[rows] + (1.0 - beta1) * g.values
            v[rows] = beta2 * v[rows] + (1.0 - beta2) * g.values**2
            p[rows] -= lr * (m[rows] / bc1) / (np.sqrt(v[rows] / bc2) + eps)
        else:
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * g * g
            p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
