"""Numpy implementations of the hot elementwise kernels.

Fallback twin of the compiled ridkit._ckernels module; same signatures and
semantics. All arguments are 2-D float64 arrays, all results are freshly
allocated.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND_NAME = "python"


def adam_update(p, g, m, v, t, lr, beta1, beta2, eps, weight_decay):
    """One Adam step with bias correction and decoupled weight decay.

    Returns (p_new, m_new, v_new). The decay rescales the parameter before
    the Adam delta is applied.
    """
    m_new = beta1 * m + (1.0 - beta1) * g
    v_new = beta2 * v + (1.0 - beta2) * (g * g)
    c1 = 1.0 / (1.0 - beta1 ** t)
    c2 = 1.0 / (1.0 - beta2 ** t)
    p_new = p * (1.0 - lr * weight_decay) - lr * ((m_new * c1) / (np.sqrt(v_new * c2) + eps))
    return p_new, m_new, v_new


def softclamp(raw, clamp):
    """Saturating log-scale: clamp * (2/pi) * atan(raw), always in (-clamp, clamp)."""
    return np.arctan(raw) * (clamp * (2.0 / math.pi))


def coupling_fwd(active, s_raw, t, clamp):
    """Affine coupling forward on the active half: out = active*exp(s)+t.

    Returns (out, s_eff) where s_eff is the clamped log-scale.
    """
    s_eff = softclamp(s_raw, clamp)
    return active * np.exp(s_eff) + t, s_eff


def coupling_inv(v_active, s_raw, t, clamp):
    """Exact inverse of coupling_fwd: u = (v - t) * exp(-s). Returns (u, s_eff)."""
    s_eff = softclamp(s_raw, clamp)
    return (v_active - t) * np.exp(-s_eff), s_eff


def row_sumsq_diff(a, b):
    """Per-row sum of squared differences, shape (n, 1)."""
    d = a - b
    return (d * d).sum(axis=1, keepdims=True)
