"""Bias-corrected adaptive-moment (Adam) parameter updates.

Hand-written so the whole training path stays auditable; the update is
the standard first/second-moment rule with bias correction and the
epsilon outside the square root.
"""

from __future__ import annotations

import numpy as np

from .exceptions import ConfigurationError, ShapeError


class Adam:
    """Adam state over a fixed list of parameter shapes.

    ``step`` is functional: it returns fresh updated arrays and advances
    the internal moment accumulators and step counter.
    """

    def __init__(self, shapes, learning_rate=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if learning_rate < 0:
            raise ConfigurationError(f"learning_rate must be >= 0, got {learning_rate}")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ConfigurationError("betas must lie in [0, 1)")
        if eps <= 0:
            raise ConfigurationError(f"eps must be positive, got {eps}")
        self.learning_rate = float(learning_rate)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]

    def step(self, params, grads):
        if len(params) != len(self.m) or len(grads) != len(self.m):
            raise ShapeError("parameter/gradient list length does not match state")
        for p, g, m in zip(params, grads, self.m):
            if p.shape != m.shape or g.shape != m.shape:
                raise ShapeError(
                    f"shape mismatch: param {p.shape}, grad {g.shape}, state {m.shape}"
                )
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / c1
            v_hat = self.v[i] / c2
            out.append(p - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps))
        return out


def adam_step(state: Adam, params, grads):
    """Single update through an existing :class:`Adam` state."""
    return state.step(params, grads)
