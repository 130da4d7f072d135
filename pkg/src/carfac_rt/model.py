"""Floating-point CARFAC reference chain.

The per-sample functions here (``car_step``, ``highpass_step``, ``agc_step``,
``carfac_sample``) are the readable reference. ``Carfac.process`` runs the
same arithmetic, in the same order, through the compiled kernel (or its
pure-Python twin), so block and per-sample paths agree bit for bit.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _backend
from .approx import fit_gain_quadratic, gain_quadratic, ihc_approx, ohc_nlf_approx
from .errors import ConfigError, ContractError, NumericFault
from .exact import g_exact, ihc_exact, ohc_exact
from .params import (
    CarfacCoeffs,
    CarfacParams,
    erb_hz,
    erb_rate_to_hz,
    hz_to_erb_rate,
)

MODES = ("exact", "approx")

# row layout of the float state buffer shared with the kernels
_ROWS = ("W0", "W1", "W1_prev", "r", "g", "hpf_lp", "bm_hpf", "v_mem",
         "v", "nlf", "b", "u")
ROW = {name: i for i, name in enumerate(_ROWS)}
# row layout of the packed coefficient matrix
COEF_ROWS = ("a0", "c0", "h", "r1", "d_rz", "A", "B", "C")


def pole_frequencies(params):
    """Pole frequencies in Hz, strictly decreasing with channel index."""
    n = params.n_channels
    e_hi = float(hz_to_erb_rate(params.max_pole_hz))
    e_lo = float(hz_to_erb_rate(params.min_pole_hz))
    if params.erb_per_step is None:
        if n == 1:
            return np.array([float(params.max_pole_hz)])
        e = np.linspace(e_hi, e_lo, n)
        f = erb_rate_to_hz(e)
        f[0], f[-1] = params.max_pole_hz, params.min_pole_hz
        return f
    e = e_hi - params.erb_per_step * np.arange(n)
    f = erb_rate_to_hz(e)
    if f[-1] < params.min_pole_hz:
        raise ConfigError(
            f"{n} channels at {params.erb_per_step} ERB/step reach {f[-1]:.1f} Hz, "
            f"below min_pole_hz = {params.min_pole_hz}")
    f[0] = params.max_pole_hz
    return f


def design_carfac(params=None, **overrides):
    """Design per-channel resonator, gain-fit, hair-cell and AGC constants."""
    if params is None:
        params = CarfacParams(**overrides)
    elif overrides:
        raise TypeError("pass either a CarfacParams or keyword overrides, not both")
    params.validate()
    fs = params.sample_rate_hz

    f = pole_frequencies(params)
    theta = 2.0 * np.pi * f / fs
    a0 = np.cos(theta)
    c0 = np.sin(theta)
    h = c0 * (params.zero_ratio ** 2 - 1.0)

    # compress theta toward Nyquist so high channels get somewhat higher Q
    x = theta / np.pi
    ff = params.high_f_damping_compression
    zr = np.pi * (x - ff * x ** 3)
    min_zetas = params.min_zeta + 0.25 * (erb_hz(f) / f - params.min_zeta)
    min_zetas = np.minimum(min_zetas, params.max_zeta)
    r1 = 1.0 - zr * params.max_zeta
    d_rz = zr * (params.max_zeta - min_zetas)
    if np.any(r1 <= 0) or np.any(r1 + d_rz > 1.0):
        raise ConfigError("damping map puts a pole radius outside (0, 1]")

    fits = [fit_gain_quadratic(a0[n], c0[n], h[n], r1[n], d_rz[n])
            for n in range(len(f))]

    intervals = params.agc_intervals()
    agc_ct = tuple(iv / (tau * fs) for iv, tau in zip(intervals, params.agc_time_constants_s))

    return CarfacCoeffs(
        params=params,
        pole_hz=f,
        a0=a0,
        c0=c0,
        h=h,
        r1=r1,
        d_rz=d_rz,
        gain_A=np.array([q.A for q in fits]),
        gain_B=np.array([q.B for q in fits]),
        gain_C=np.array([q.C for q in fits]),
        gain_max_rel_error=np.array([q.max_rel_error for q in fits]),
        gain_max_abs_error=np.array([q.max_abs_error for q in fits]),
        hpf_coeff=1.0 - math.exp(-2.0 * math.pi * params.hpf_cutoff_hz / fs),
        agc_intervals=intervals,
        agc_ct=agc_ct,
        ihc_rest_exact=ihc_exact(0.0, params.ihc_offset),
        ihc_rest_approx=ihc_approx(0.0, params.ihc_approx_offset),
    )


def pack_coeffs(coeffs):
    """Coefficient matrix (rows COEF_ROWS) and scalar vector for the kernels."""
    c = coeffs
    coef = np.ascontiguousarray(np.vstack(
        [c.a0, c.c0, c.h, c.r1, c.d_rz, c.gain_A, c.gain_B, c.gain_C]))
    p = c.params
    scal = np.array(
        [c.hpf_coeff, p.ihc_offset, p.ihc_approx_offset, p.ohc_scale, p.ohc_offset,
         c.ihc_rest_exact, c.ihc_rest_approx, p.agc_spatial_s1, p.agc_spatial_s2,
         *c.agc_ct, *p.agc_stage_gains], dtype=np.float64)
    intervals = np.array(c.agc_intervals, dtype=np.int64)
    return coef, scal, intervals


# ---------------------------------------------------------------------------
# state


@dataclass
class CarState:
    W0: np.ndarray
    W1: np.ndarray
    W1_prev: np.ndarray
    r: np.ndarray
    g: np.ndarray


@dataclass
class HpfState:
    lp: np.ndarray
    coeff: float


@dataclass
class IhcState:
    bm_hpf: np.ndarray
    v_mem: np.ndarray


@dataclass
class OhcState:
    v: np.ndarray
    nlf: np.ndarray
    b: np.ndarray
    u: np.ndarray


@dataclass
class AgcState:
    mem: np.ndarray      # (4, N) stage memories
    acc: np.ndarray      # (4, N) detector accumulators
    count: np.ndarray    # (4,) samples since last stage update
    ct: tuple
    intervals: tuple
    s1: float
    s2: float
    stage_gains: tuple


class CarfacState:
    """All mutable per-channel state, backed by contiguous arrays.

    The sub-state dataclasses are views into ``buf``/``mem``/``acc`` so that
    the block kernels and the per-sample reference functions share storage.
    """

    def __init__(self, coeffs, mode="approx"):
        if mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
        n = coeffs.n_channels
        p = coeffs.params
        self.mode = mode
        self.buf = np.zeros((len(_ROWS), n))
        self.mem = np.zeros((4, n))
        self.acc = np.zeros((4, n))
        self.count = np.zeros(4, dtype=np.int64)
        rows = {k: self.buf[i] for k, i in ROW.items()}
        self.car = CarState(rows["W0"], rows["W1"], rows["W1_prev"], rows["r"], rows["g"])
        self.hpf = HpfState(rows["hpf_lp"], coeffs.hpf_coeff)
        self.ihc = IhcState(rows["bm_hpf"], rows["v_mem"])
        self.ohc = OhcState(rows["v"], rows["nlf"], rows["b"], rows["u"])
        self.agc = AgcState(self.mem, self.acc, self.count, coeffs.agc_ct,
                            coeffs.agc_intervals, p.agc_spatial_s1, p.agc_spatial_s2,
                            p.agc_stage_gains)
        # quiet operating point: zero velocity, zero AGC feedback
        if mode == "exact":
            nlf0 = ohc_exact(0.0, p.ohc_scale, p.ohc_offset)
        else:
            a = p.ohc_scale * 0.0 + p.ohc_offset
            nlf0 = ohc_nlf_approx(a * a)
        self.ohc.nlf[:] = nlf0
        self.ohc.u[:] = min(1.0, max(0.0, nlf0 * 1.0))
        _update_r_g(self, coeffs)

    @property
    def n_channels(self):
        return self.buf.shape[1]

    def snapshot(self):
        return (self.buf.copy(), self.mem.copy(), self.acc.copy(), self.count.copy())


def init_state(coeffs, mode="approx"):
    return CarfacState(coeffs, mode)


# ---------------------------------------------------------------------------
# per-sample reference steps


def car_step(state, coeffs, x):
    """Advance the resonator cascade by one sample.

    ``state`` is a CarState (or a CarfacState). Returns the per-channel BM
    outputs ``y`` and velocities ``v``.
    """
    car = state.car if isinstance(state, CarfacState) else state
    x = float(x)
    if not math.isfinite(x):
        raise NumericFault(f"non-finite input sample {x!r}")
    ar = coeffs.a0 * car.r
    cr = coeffs.c0 * car.r
    w0 = car.W0.copy()
    w1 = car.W1.copy()
    w1n = cr * w0 + ar * w1
    hw1 = coeffs.h * w1n
    y = np.empty_like(w0)
    xin = np.empty_like(w0)
    cur = x
    for n in range(len(y)):
        xin[n] = cur
        cur = car.g[n] * (cur + hw1[n])
        y[n] = cur
    car.W0[:] = (ar * w0 - cr * w1) + xin
    car.W1_prev[:] = w1
    car.W1[:] = w1n
    v = w1n - w1
    _check_finite(car.W0, "W0")
    _check_finite(car.W1, "W1")
    return y, v


def _check_finite(arr, name):
    bad = np.flatnonzero(~np.isfinite(arr))
    if bad.size:
        ch = int(bad[0])
        raise NumericFault(f"non-finite {name} state in channel {ch}", channel=ch)


def highpass_step(state, x):
    """One-pole DC-blocking high-pass, y = x - lp; lp += k * y.

    The output at the first sample of a step equals the step height.
    """
    hpf = state.hpf if isinstance(state, CarfacState) else state
    y = np.asarray(x, dtype=float) - hpf.lp
    hpf.lp[:] = hpf.lp + hpf.coeff * y
    return y


def spatial_smooth(x, s1, s2):
    """Three-tap smoothing: each channel keeps 1-s1-s2 and spreads s1 to the
    previous channel and s2 to the next. Spill past either end is reflected
    back into the edge channel, so the channel sum is preserved exactly."""
    n = len(x)
    if n == 1:
        return x.copy()
    c = (1.0 - s1) - s2
    right = np.empty_like(x)
    left = np.empty_like(x)
    right[:-1] = s1 * x[1:]
    right[-1] = s2 * x[-1]
    left[1:] = s2 * x[:-1]
    left[0] = s1 * x[0]
    return (c * x + right) + left


def agc_step(state, ihc_out):
    """Advance the four-stage AGC loop; returns the feedback factor ``b``.

    Stage k accumulates the detector input over its update interval; on each
    update its input is the interval mean plus stage k-1's memory, followed
    by a first-order temporal update and one spatial smoothing pass.
    """
    agc = state.agc if isinstance(state, CarfacState) else state
    d = np.asarray(ihc_out, dtype=float)
    if np.any(d < 0):
        raise ContractError("AGC input must be non-negative")
    for k in range(4):
        agc.acc[k] += d
        agc.count[k] += 1
        if agc.count[k] == agc.intervals[k]:
            mean = agc.acc[k] * (1.0 / agc.intervals[k])
            agc.acc[k] = 0.0
            agc.count[k] = 0
            inp = mean + agc.mem[k - 1] if k > 0 else mean
            m = agc.mem[k] + agc.ct[k] * (inp - agc.mem[k])
            agc.mem[k] = spatial_smooth(m, agc.s1, agc.s2)
    w = agc.stage_gains
    return ((w[0] * agc.mem[0] + w[1] * agc.mem[1]) + w[2] * agc.mem[2]) + w[3] * agc.mem[3]


def _update_r_g(state, coeffs):
    u = state.ohc.u
    state.car.r[:] = coeffs.r1 + coeffs.d_rz * u
    if state.mode == "exact":
        state.car.g[:] = g_exact(coeffs.a0, coeffs.c0, coeffs.h, state.car.r)
    else:
        state.car.g[:] = gain_quadratic(coeffs.gain_A, coeffs.gain_B, coeffs.gain_C, u)


def carfac_sample(state, coeffs, x, mode=None):
    """Run one full sample of the chain and return the N BM outputs.

    The r and g computed here take effect on the next sample's resonator
    update.
    """
    mode = state.mode if mode is None else mode
    if mode != state.mode:
        raise ConfigError(f"state was initialised for mode {state.mode!r}")
    p = coeffs.params
    y, v = car_step(state, coeffs, x)
    bm = highpass_step(state, y)
    if mode == "exact":
        vm = ihc_exact(bm, p.ihc_offset)
        rest = coeffs.ihc_rest_exact
    else:
        vm = ihc_approx(bm, p.ihc_approx_offset)
        rest = coeffs.ihc_rest_approx
    state.ihc.bm_hpf[:] = bm
    state.ihc.v_mem[:] = vm
    b = agc_step(state, np.maximum(0.0, vm - rest))
    if mode == "exact":
        nlf = ohc_exact(v, p.ohc_scale, p.ohc_offset)
    else:
        a = p.ohc_scale * v + p.ohc_offset
        nlf = ohc_nlf_approx(a * a)
    state.ohc.v[:] = v
    state.ohc.nlf[:] = nlf
    state.ohc.b[:] = b
    state.ohc.u[:] = np.minimum(1.0, np.maximum(0.0, nlf * np.maximum(0.0, 1.0 - b)))
    _update_r_g(state, coeffs)
    return y


# ---------------------------------------------------------------------------
# block engine


class Carfac:
    """Streaming float engine; ``process`` accepts blocks of any length."""

    def __init__(self, coeffs, mode="approx", backend=None):
        self.coeffs = coeffs
        self.mode = mode
        self.kernels = _backend.get(backend)
        self._coef, self._scal, self._intervals = pack_coeffs(coeffs)
        self.state = CarfacState(coeffs, mode)

    @property
    def n_channels(self):
        return self.coeffs.n_channels

    def reset(self):
        self.state = CarfacState(self.coeffs, self.mode)

    def process(self, x, out=None):
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.ndim != 1:
            raise ContractError("process expects a 1-D sample block")
        if not np.all(np.isfinite(x)):
            i = int(np.flatnonzero(~np.isfinite(x))[0])
            raise NumericFault(f"non-finite input sample at index {i}")
        if out is None:
            out = np.empty((len(x), self.n_channels))
        s = self.state
        self.kernels.run_float(x, out, self._coef, self._scal, self._intervals,
                               s.buf, s.mem, s.acc, s.count, self.mode == "exact")
        _check_finite(s.car.W0, "W0")
        _check_finite(s.car.W1, "W1")
        return out


def run_linear_cascade(coeffs, x, u=1.0, mode="exact", backend=None):
    """Cascade response with the undamping frozen at ``u`` (no feedback)."""
    u = np.broadcast_to(np.asarray(u, dtype=float), coeffs.a0.shape)
    r = coeffs.r1 + coeffs.d_rz * u
    if mode == "exact":
        g = g_exact(coeffs.a0, coeffs.c0, coeffs.h, r)
    else:
        g = gain_quadratic(coeffs.gain_A, coeffs.gain_B, coeffs.gain_C, u)
    x = np.ascontiguousarray(x, dtype=np.float64)
    out = np.empty((len(x), coeffs.n_channels))
    w0 = np.zeros(coeffs.n_channels)
    w1 = np.zeros(coeffs.n_channels)
    _backend.get(backend).run_car_linear(
        x, out, np.ascontiguousarray(coeffs.a0), np.ascontiguousarray(coeffs.c0),
        np.ascontiguousarray(coeffs.h), np.ascontiguousarray(r), np.ascontiguousarray(g),
        w0, w1)
    return out


def transfer_function(a0, c0, h, r, g, omega):
    """Direct evaluation of the stage transfer function on the unit circle."""
    z = np.exp(1j * np.asarray(omega))
    den = z * z - 2.0 * a0 * r * z + ((a0 * r) ** 2 + (c0 * r) ** 2)
    return g * (1.0 + h * z * c0 * r / den)
