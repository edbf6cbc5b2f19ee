"""Standard normal cdf and density with a fixed clamping convention."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erfc

CLAMP = 8.0
_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def norm_cdf(t):
    """Standard normal cdf computed through ``erfc``.

    Arguments beyond ``+-8`` are clamped to ``0`` or ``1``. Scalars in,
    floats out; arrays in, arrays out.
    """
    arr = np.asarray(t, dtype=float)
    out = 0.5 * erfc(-arr / _SQRT2)
    out = np.where(arr > CLAMP, 1.0, np.where(arr < -CLAMP, 0.0, out))
    if out.ndim == 0:
        return float(out)
    return out


def norm_pdf(t):
    """Standard normal density."""
    arr = np.asarray(t, dtype=float)
    out = _INV_SQRT_2PI * np.exp(-0.5 * arr * arr)
    if out.ndim == 0:
        return float(out)
    return out
