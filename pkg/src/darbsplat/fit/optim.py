"""Adam on dictionaries of numpy arrays."""

from __future__ import annotations

import numpy as np

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-15


def adam_init(params):
    return {k: (np.zeros_like(v), np.zeros_like(v)) for k, v in params.items()}


def adam_step(params, grads, state, lrs, t, beta1=BETA1, beta2=BETA2, eps=EPS):
    """One bias-corrected Adam update at step ``t`` (1-based).

    ``lrs`` maps parameter names to learning rates (a single float applies to
    all).  Returns new ``(params, state)``; the inputs are not modified.
    """
    new_params, new_state = {}, {}
    c1 = 1 - beta1**t
    c2 = 1 - beta2**t
    for k, p in params.items():
        g = grads[k]
        m, v = state[k]
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        lr = lrs if np.isscalar(lrs) else lrs[k]
        new_params[k] = p - lr * (m / c1) / (np.sqrt(v / c2) + eps)
        new_state[k] = (m, v)
    return new_params, new_state
