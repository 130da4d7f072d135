"""Worst-case quantization error bound for the fixed-point engine.

Every requantization in the fixed datapath rounds by at most half an LSB
(one LSB when truncating). Each of those errors enters the cascade at a
known stage, either into the resonator state or onto the stage output,
and then travels down the cascade. Freezing the undamping at its operating
point makes the cascade linear, so the error at channel n is bounded by

    E[n] = sum over stages m <= n of  e_y[m]  * ||h_y(m->n)||_1
                                    + e_w1[m] * ||h_w1(m->n)||_1
                                    + e_w0[m] * ||h_w0(m->n)||_1

where the h are impulse responses of the linear cascade to a unit bump on
the output of stage m or on one of its two states, and the e are per-stage
injection magnitudes built from LSB sizes, coefficient rounding, and peak
signal levels of the float reference. If |error| <= E[n] at every sample
then the mean squared error is at most E[n]**2, which turns the bound into
an SNR floor.

The AGC loop is treated as open: local rounding in the hair-cell and
undamping chain enters through a bounded error in u, but errors that
circulate through the loop are not chased. The margin of the worst-case
(L1) treatment covers that in practice; tests check the bound against the
measured error.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .approx import gain_quadratic
from .fixedpoint import ICOEF_ROWS, EngineFormats, quantize_coeffs
from .model import Carfac

_FLUSH = 1e-250


@dataclass
class QuantizationBound:
    per_channel: np.ndarray          # worst-case |fixed - float| per channel
    rms_per_channel: np.ndarray      # rms error under the independent-noise model
    worst_case_snr_db: float         # SNR implied by per_channel over the window
    snr_floor_db: float              # SNR implied by rms_per_channel
    reference: np.ndarray            # float approx-mode output for the input
    u_operating: np.ndarray
    window: slice
    terms: dict = field(default_factory=dict)

    @property
    def max_error(self):
        return float(self.per_channel.max())


def _half(frac, nearest):
    return 2.0 ** -frac * (0.5 if nearest else 1.0)


def _trace_reference(coeffs, x, window, backend):
    """Float approx run, sample by sample, tracking state peaks."""
    eng = Carfac(coeffs, "approx", backend=backend)
    s, k = eng.state, eng.kernels
    n_ch = coeffs.n_channels
    y = np.empty((len(x), n_ch))
    w0pk = np.zeros(n_ch)
    w1pk = np.zeros(n_ch)
    gmin = np.full(n_ch, np.inf)
    usum = np.zeros(n_ch)
    x = np.ascontiguousarray(x, dtype=np.float64)
    for t in range(len(x)):
        gmin = np.minimum(gmin, s.car.g)
        k.run_float(x[t:t + 1], y[t:t + 1], eng._coef, eng._scal, eng._intervals,
                    s.buf, s.mem, s.acc, s.count, False)
        np.maximum(w0pk, np.abs(s.car.W0), out=w0pk)
        np.maximum(w1pk, np.abs(s.car.W1), out=w1pk)
        if window.start <= t < window.stop:
            usum += s.ohc.u
    u_op = usum / (window.stop - window.start)
    return y, w0pk, w1pk, gmin, u_op


def _l1_responses(a0, c0, h, r, g, inject, kernels, block=4096, max_len=1 << 21, rtol=1e-9):
    """L1 and squared L2 norms of the cascade response to one injection.

    ``inject`` is 'x' (unit impulse at the cascade input), 'w0' or 'w1'
    (unit initial state on the first stage). Returns (l1, l2sq), one value
    per stage.
    """
    n = len(a0)
    w0 = np.zeros(n)
    w1 = np.zeros(n)
    xin = np.zeros(block)
    if inject == "x":
        xin[0] = 1.0
    elif inject == "w0":
        w0[0] = 1.0
    else:
        w1[0] = 1.0
    out = np.empty((block, n))
    l1 = np.zeros(n)
    l2 = np.zeros(n)
    prev = None
    done = 0
    while True:
        kernels.run_car_linear(xin, out, a0, c0, h, r, g, w0, w1)
        part = np.abs(out).sum(axis=0)
        l1 += part
        l2 += np.square(out).sum(axis=0)
        done += block
        xin[0] = 0.0
        w0[np.abs(w0) < _FLUSH] = 0.0
        w1[np.abs(w1) < _FLUSH] = 0.0
        if np.all(part <= rtol * l1):
            break
        if done >= max_len:
            # geometric tail from the decay between the last two blocks
            ratio = np.where(prev > 0, part / np.where(prev > 0, prev, 1.0), 0.0)
            ratio = np.clip(ratio, 0.0, 0.999)
            l1 += part * ratio / (1.0 - ratio)
            l2 += np.square(out).sum(axis=0) * ratio ** 2 / (1.0 - ratio ** 2)
            break
        prev = part
    return l1, l2


def quantization_bound(coeffs, x, formats=None, window=None, backend=None):
    """Bound |fixed - float approx| per channel for input ``x``.

    ``window`` is the sample range used for the operating point and the
    SNR floor (default: second half of the input).
    """
    fm = formats or EngineFormats()
    fx = quantize_coeffs(coeffs, fm)
    kernels = _backend.get(backend)
    nearest = fm.rounding == "nearest"
    n_ch = coeffs.n_channels
    if window is None:
        window = slice(len(x) // 2, len(x))

    y, w0pk, w1pk, gmin, u_op = _trace_reference(coeffs, x, window, backend)
    ypk = np.abs(y).max(axis=0)

    ic = {name: fx.icoef[i].astype(float) for i, name in enumerate(ICOEF_ROWS)}
    FS, FU, FA, FC = fm.signal_frac, fm.unit_frac, fm.acc_frac, fm.coef_frac
    eS, eU, eA, eC = (_half(f, nearest) for f in (FS, FU, FA, FC))

    # u: the OHC/undamping chain rounds six times; each squaring at most
    # doubles an incoming error, so 16 half-LSBs cover the chain. The v
    # operand slice enters through the NLF slope.
    a = np.linspace(-3.0, 3.0, 60001)
    s = np.maximum(0.0, 1.0 - a * a / 8.0)
    nlf_slope = np.max(np.abs(np.gradient(s ** 8, a)))
    du = 16.0 * eU + nlf_slope * coeffs.params.ohc_scale * eS

    a0, c0, h = coeffs.a0, coeffs.c0, coeffs.h
    r_op = coeffs.r1 + coeffs.d_rz * u_op
    g_op = gain_quadratic(coeffs.gain_A, coeffs.gain_B, coeffs.gain_C, u_op)
    KA = np.abs(a0 * r_op - 1.0)
    KC = np.abs(c0 * r_op)
    sA, sC, sT = ic["sA"], ic["sC"], ic["sT"]
    rnd = 0.5 if nearest else 1.0
    # affine coefficient: u error, K1/L1 mantissa, wide rounding, 18-bit slice
    dKA = np.abs(a0 * coeffs.d_rz) * (du + 2.0 ** -17) + rnd * 2.0 ** -sA + 2 * eC
    dKC = np.abs(c0 * coeffs.d_rz) * (du + 2.0 ** -17) + rnd * 2.0 ** -sC + 2 * eC
    gslope = np.maximum(np.abs(coeffs.gain_B), np.abs(2 * coeffs.gain_A + coeffs.gain_B))
    dg = (gslope * du + np.abs(coeffs.gain_A) * 2.0 ** -17 + rnd * 2.0 ** -sT
          + 2 * eC + eU)
    scale = 2.0 ** ic["k"]              # Z-domain errors in W units
    dh = h * 2.0 ** -17                 # 18-bit mantissa on h * 2**k

    e_w1 = scale * ((KA + KC) * eS + 2 * eA) + dKA * w1pk + dKC * w0pk
    e_w0 = scale * ((KA + KC) * eS + 3 * eA) + dKA * w0pk + dKC * w1pk
    stage_in = ypk / gmin
    e_y = (g_op * (eS + h * scale * eS + eA + dh * w1pk + h * e_w1) + eA + dg * stage_in)

    a0c, c0c, hc = (np.ascontiguousarray(v) for v in (a0, c0, h))
    rc, gc = np.ascontiguousarray(r_op), np.ascontiguousarray(g_op)
    bound = np.zeros(n_ch)
    var = np.zeros(n_ch)
    for m in range(n_ch):
        sub = slice(m, n_ch)
        args = (a0c[sub].copy(), c0c[sub].copy(), hc[sub].copy(), rc[sub].copy(), gc[sub].copy())
        l1_w1, l2_w1 = _l1_responses(*args, "w1", kernels)
        l1_w0, l2_w0 = _l1_responses(*args, "w0", kernels)
        bound[m] += e_y[m]
        var[m] += e_y[m] ** 2 / 3.0
        if m + 1 < n_ch:
            nxt = slice(m + 1, n_ch)
            l1_y, l2_y = _l1_responses(a0c[nxt].copy(), c0c[nxt].copy(), hc[nxt].copy(),
                                       rc[nxt].copy(), gc[nxt].copy(), "x", kernels)
            bound[m + 1:] += e_y[m] * l1_y
            var[m + 1:] += e_y[m] ** 2 / 3.0 * l2_y
        bound[m:] += e_w1[m] * l1_w1 + e_w0[m] * l1_w0
        var[m:] += (e_w1[m] ** 2 * l2_w1 + e_w0[m] ** 2 * l2_w0) / 3.0
    # input word rounding travels the whole cascade
    e_in = _half(fm.input.frac_bits, fm.input.rounding == "nearest")
    l1_x, l2_x = _l1_responses(a0c, c0c, hc, rc, gc, "x", kernels)
    bound += e_in * l1_x
    var += e_in ** 2 / 3.0 * l2_x

    p_sig = float(np.mean(np.sum(y[window] ** 2, axis=1)))
    worst_floor = 10.0 * math.log10(p_sig / float(np.sum(bound ** 2)))
    stat_floor = 10.0 * math.log10(p_sig / float(np.sum(var)))
    terms = {"e_y": e_y, "e_w0": e_w0, "e_w1": e_w1, "du": du, "dg": dg}
    return QuantizationBound(bound, np.sqrt(var), worst_floor, stat_floor, y, u_op,
                             window, terms)


def snr_db(reference, test):
    """10 log10 of reference power over the power of (test - reference)."""
    ref = np.asarray(reference, dtype=np.float64)
    err = np.asarray(test, dtype=np.float64) - ref
    p_err = float(np.sum(err * err))
    if p_err == 0.0:
        return math.inf
    return 10.0 * math.log10(float(np.sum(ref * ref)) / p_err)
