"""Division-free replacements for the hair-cell nonlinearities and DC gain.

Every evaluation path here uses only multiply, add, min/max and repeated
squaring. Divisions by powers of two are written as multiplications by the
reciprocal, which is exact in binary floating point.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, FitError
from .exact import g_exact, ihc_exact, ohc_exact


def _pow8(x):
    x2 = x * x
    x4 = x2 * x2
    return x4 * x4


def ihc_approx(bm_hpf, offset=0.13):
    """Approximate IHC conductance 0.75 * (1 - p)^2 with p = min(1, p_int^8)."""
    x = np.asarray(bm_hpf, dtype=float)
    p_int = np.maximum(0.0, 1.0 - (x + offset) * 0.25)
    p = np.minimum(1.0, _pow8(p_int))
    q = 1.0 - p
    out = 0.75 * (q * q)
    return float(out) if out.ndim == 0 else out


def ohc_nlf_approx(sqr):
    """Clipped polynomial max(0, 1 - sqr/8)^8; exactly zero for sqr >= 8."""
    s = np.asarray(sqr, dtype=float)
    if np.any(s < 0):
        raise ContractError("ohc_nlf_approx requires sqr >= 0")
    out = _pow8(np.maximum(0.0, 1.0 - s * 0.125))
    return float(out) if out.ndim == 0 else out


def ohc_approx(v, scale=0.1, offset=0.04):
    """Approximate velocity nonlinearity, i.e. ohc_nlf_approx of (scale*v + offset)^2."""
    a = scale * np.asarray(v, dtype=float) + offset
    return ohc_nlf_approx(a * a)


@dataclass(frozen=True)
class GainFit:
    A: float
    B: float
    C: float
    max_rel_error: float
    max_abs_error: float
    fit_domain: tuple = (0.0, 1.0)

    def __call__(self, u):
        return gain_quadratic(self.A, self.B, self.C, u)


def gain_quadratic(A, B, C, u):
    """Evaluate A*u^2 + B*u + C in Horner form (two multiplies, two adds)."""
    return (A * u + B) * u + C


def fit_gain_quadratic(a0, c0, h, r1, d_rz, n_fit=256, n_verify=4096):
    """Least-squares quadratic in the undamping u for the exact stage gain.

    The fit uses a uniform grid of ``n_fit`` points on [0, 1]; the reported
    errors come from an independent grid of ``n_verify`` points.
    """
    if n_fit < 3 or n_verify < 2:
        raise FitError("need at least 3 fit points and 2 verification points")
    u = np.linspace(0.0, 1.0, n_fit)
    target = g_exact(a0, c0, h, r1 + d_rz * u)
    if not np.all(np.isfinite(target)):
        raise FitError("exact gain is not finite on the fit grid")

    if np.ptp(target) == 0.0:
        # constant target, e.g. h == 0; avoid lstsq round-off in A and B
        A, B, C = 0.0, 0.0, float(target[0])
    else:
        V = np.vander(u, 3)
        coef, _, rank, _ = np.linalg.lstsq(V, target, rcond=None)
        if rank < 3:
            raise FitError(f"singular normal equations (rank {rank})")
        A, B, C = (float(c) for c in coef)

    uu = np.linspace(0.0, 1.0, n_verify)
    ref = g_exact(a0, c0, h, r1 + d_rz * uu)
    err = np.abs(gain_quadratic(A, B, C, uu) - ref)
    return GainFit(A, B, C, float(np.max(err / np.abs(ref))), float(np.max(err)))


@dataclass
class ErrorSweep:
    grid: np.ndarray
    exact: np.ndarray
    approx: np.ndarray
    abs_error: np.ndarray

    @property
    def max_abs_error(self):
        return float(np.max(self.abs_error))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["input", "exact", "approx", "abs_error"])
            for row in zip(self.grid, self.exact, self.approx, self.abs_error):
                w.writerow([repr(float(v)) for v in row])


def _check_grid(grid):
    g = np.atleast_1d(np.asarray(grid, dtype=float))
    if g.size == 0:
        raise ContractError("sweep grid is empty")
    if not np.all(np.isfinite(g)):
        raise ContractError("sweep grid contains non-finite values")
    if np.any(np.diff(g) < 0):
        raise ContractError("sweep grid must be sorted ascending")
    return g


def _sweep(grid, exact, approx):
    exact = np.atleast_1d(exact)
    approx = np.atleast_1d(approx)
    return ErrorSweep(grid, exact, approx, np.abs(exact - approx))


def sweep_ihc(grid=None, offset=0.175, approx_offset=0.13):
    if grid is None:
        grid = np.linspace(-0.5, 4.0, 4501)
    g = _check_grid(grid)
    return _sweep(g, ihc_exact(g, offset), ihc_approx(g, approx_offset))


def sweep_ohc(grid=None, scale=0.1, offset=0.04):
    if grid is None:
        grid = np.linspace(-50.0, 50.0, 10001)
    g = _check_grid(grid)
    return _sweep(g, ohc_exact(g, scale, offset), ohc_approx(g, scale, offset))


# Regression ceilings for the default sweeps, frozen from dense runs of the
# sweeps above (measured values in the trailing comments) with a little
# headroom. A change that pushes an approximation past these is a bug.
SWEEP_LIMITS = {
    "ihc_max_abs": 0.128,           # 0.12708 on [-0.5, 4]
    "ihc_small_max_abs": 0.0062,    # 0.0061176 on [-0.2, 0.2]
    "ohc_max_abs": 0.237,           # 0.23663 on [-50, 50]
    "ohc_overshoot": 1e-12,         # approx never exceeds exact: 0.0
}


def check_sweeps(ihc=None, ohc=None, limits=SWEEP_LIMITS):
    """Return a list of human-readable violations (empty when all pass)."""
    ihc = ihc if ihc is not None else sweep_ihc()
    ohc = ohc if ohc is not None else sweep_ohc()
    small = sweep_ihc(np.linspace(-0.2, 0.2, 4001))
    found = []
    if ihc.max_abs_error > limits["ihc_max_abs"]:
        found.append(f"ihc max abs error {ihc.max_abs_error:.6g} > {limits['ihc_max_abs']}")
    if small.max_abs_error > limits["ihc_small_max_abs"]:
        found.append(f"ihc small-signal error {small.max_abs_error:.6g} > "
                     f"{limits['ihc_small_max_abs']}")
    if ohc.max_abs_error > limits["ohc_max_abs"]:
        found.append(f"ohc max abs error {ohc.max_abs_error:.6g} > {limits['ohc_max_abs']}")
    over = float(np.max(ohc.approx - ohc.exact))
    if over > limits["ohc_overshoot"]:
        found.append(f"ohc approx exceeds exact by {over:.3g}")
    return found
