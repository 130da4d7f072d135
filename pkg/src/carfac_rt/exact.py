"""Exact (division-bearing) nonlinearities and the DC-gain factor."""

import numpy as np

from .errors import SingularityError

DENOM_GUARD = 1e-12


def _scalar_or_array(x, out):
    return float(out) if np.ndim(x) == 0 else out


def g_exact(a0, c0, h, r):
    """DC-gain factor that makes one resonator stage unity-gain at z = 1.

    Broadcasts over array arguments.
    """
    a0 = np.asarray(a0, dtype=float)
    r = np.asarray(r, dtype=float)
    num = 1.0 - 2.0 * a0 * r + r * r
    den = 1.0 - (2.0 * a0 - np.asarray(h) * np.asarray(c0)) * r + r * r
    if np.any(np.abs(den) < DENOM_GUARD):
        raise SingularityError("g denominator within 1e-12 of zero")
    out = num / den
    return float(out) if out.ndim == 0 else out


def ihc_exact(bm_hpf, offset=0.175):
    """Inner hair cell conductance p^3 / (p^3 + p^2 + 0.1), p = max(0, x + offset)."""
    p = np.maximum(0.0, np.asarray(bm_hpf, dtype=float) + offset)
    p2 = p * p
    p3 = p2 * p
    return _scalar_or_array(bm_hpf, p3 / (p3 + p2 + 0.1))


def ohc_exact(v, scale=0.1, offset=0.04):
    """Outer hair cell velocity nonlinearity 1 / (1 + (scale*v + offset)^2)."""
    a = scale * np.asarray(v, dtype=float) + offset
    return _scalar_or_array(v, 1.0 / (1.0 + a * a))
