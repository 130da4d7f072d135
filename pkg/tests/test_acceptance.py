"""Exit criteria for the package, one test per criterion.

A summary line per criterion is printed at the end of the run (see the
terminal-summary hook in conftest).
"""

import io
import time

import numpy as np
import pytest

from carfac_rt import _backend
from carfac_rt.approx import (SWEEP_LIMITS, check_sweeps, gain_quadratic, ihc_approx,
                              ohc_nlf_approx, sweep_ihc, sweep_ohc)
from carfac_rt.exact import g_exact, ihc_exact, ohc_exact
from carfac_rt.fixedpoint import FixedCarfac, audit_datapath
from carfac_rt.model import Carfac, run_linear_cascade, transfer_function
from carfac_rt.qbound import quantization_bound, snr_db
from carfac_rt.schedule import analyze_schedule
from carfac_rt.streamio import (CochleagramSink, read_cochleagram, read_raw_i24, run_pipeline,
                                synchronize, write_cochleagram, write_raw_i24)

acceptance = pytest.mark.acceptance


def _elapsed(t0):
    return time.perf_counter() - t0


@acceptance(1, "gain fit within 0.6% on the default design")
def test_gain_fit_bound(default_coeffs):
    t0 = time.perf_counter()
    c = default_coeffs
    u = np.linspace(0.0, 1.0, 4096)
    worst = 0.0
    for n in range(c.n_channels):
        ref = g_exact(c.a0[n], c.c0[n], c.h[n], c.r1[n] + c.d_rz[n] * u)
        fit = gain_quadratic(c.gain_A[n], c.gain_B[n], c.gain_C[n], u)
        worst = max(worst, float(np.max(np.abs(fit - ref) / ref)))
    print(f"max relative gain-fit error {worst:.5f}")
    assert worst <= 0.006
    assert _elapsed(t0) < 1.0


@acceptance(2, "hair-cell approximations: zero points, monotone, frozen sweep limits")
def test_nlf_suite():
    t0 = time.perf_counter()
    # zero points agree exactly
    assert ihc_exact(-0.175) == 0.0 and ihc_approx(-0.13) == 0.0
    assert ihc_approx(-0.13 - 1.0) == 0.0
    assert ohc_exact(-0.4) == 1.0 and ohc_nlf_approx(0.0) == 1.0
    assert ohc_nlf_approx(8.0) == 0.0

    ihc = sweep_ihc()
    ohc = sweep_ohc()
    assert np.all(np.diff(ihc.exact) >= 0) and np.all(np.diff(ihc.approx) >= 0)
    s = np.linspace(0.0, 10.0, 20001)
    assert np.all(np.diff(ohc_nlf_approx(s)) <= 0)
    assert np.all(np.diff(1.0 / (1.0 + s)) <= 0)

    assert check_sweeps(ihc, ohc) == []
    small = sweep_ihc(np.linspace(-0.2, 0.2, 4001))
    assert small.max_abs_error <= SWEEP_LIMITS["ihc_small_max_abs"]
    assert _elapsed(t0) < 1.0


@acceptance(3, "unit DC gain with the exact g")
def test_dc_gain_unity(default_coeffs):
    t0 = time.perf_counter()
    c = default_coeffs
    for u in np.linspace(0.0, 1.0, 11):
        r = c.r1 + c.d_rz * u
        g = g_exact(c.a0, c.c0, c.h, r)
        H1 = transfer_function(c.a0, c.c0, c.h, r, g, 0.0)
        assert np.max(np.abs(H1 - 1.0)) <= 1e-9
    assert _elapsed(t0) < 1.0


@acceptance(4, "impulse-response FFT matches the stage transfer function")
def test_transfer_function_equivalence(default_coeffs):
    t0 = time.perf_counter()
    c = default_coeffs
    kern = _backend.default
    n = 1 << 16
    k = np.linspace(0, n // 2, 1024).astype(int)
    w = 2 * np.pi * k / n
    worst = 0.0
    for u in (0.0, 1.0):
        r = c.r1 + c.d_rz * u
        g = g_exact(c.a0, c.c0, c.h, r)
        for m in range(c.n_channels):
            x = np.zeros(n)
            x[0] = 1.0
            out = np.empty((n, 1))
            one = [np.array([v[m]]) for v in (c.a0, c.c0, c.h, r, g)]
            kern.run_car_linear(x, out, *one, np.zeros(1), np.zeros(1))
            Y = np.fft.rfft(out[:, 0])[k]
            H = transfer_function(c.a0[m], c.c0[m], c.h[m], r[m], g[m], w)
            worst = max(worst, float(np.max(np.abs(Y - H) / np.abs(H))))
    print(f"worst relative deviation {worst:.3g}")
    assert worst <= 1e-6
    assert _elapsed(t0) < 10.0


@acceptance(5, "best frequencies strictly decrease along the cascade")
def test_tonotopy(default_coeffs):
    t0 = time.perf_counter()
    c = default_coeffs
    n = 1 << 18
    x = np.zeros(n)
    x[0] = 1.0
    y = run_linear_cascade(c, x, u=1.0, mode="exact")
    spec = np.abs(np.fft.rfft(y, axis=0))
    bf = np.argmax(spec[1:], axis=0) + 1
    assert np.all(np.diff(bf) < 0)
    assert bf[32] * c.sample_rate_hz / n == pytest.approx(4011.71875)
    assert _elapsed(t0) < 30.0


@acceptance(6, "compressive growth at the top of a 40 dB tone sweep")
def test_compression(default_coeffs):
    t0 = time.perf_counter()
    c = default_coeffs
    fs = c.sample_rate_hz
    f0 = 4011.71875                      # channel 32 best frequency
    amps = 10.0 ** np.arange(-4.0, -1.99, 0.5)
    n = int(0.6 * fs)
    tail = int(0.1 * fs)
    t = np.arange(n) / fs
    levels = []
    for a in amps:
        y = Carfac(c, "approx").process(a * np.sin(2 * np.pi * f0 * t))
        levels.append(np.sqrt(np.mean(y[-tail:, 32] ** 2)))
    slopes = np.diff(np.log10(levels)) / np.diff(np.log10(amps))
    print("log-log slopes", np.round(slopes, 3))
    # frozen from the oracle run: 0.918, 0.793, 0.595, 0.398
    assert np.all(slopes < 1.0)
    assert slopes[-1] < 0.5
    assert _elapsed(t0) < 60.0


@acceptance(7, "schedule: 390-cycle budget, feasible, seven instances")
def test_schedule_claims():
    rep = analyze_schedule(64, 256_000, 100e6, stage_depths=100)
    assert rep.budget_cycles == 390
    assert rep.used_cycles == 164
    assert rep.feasible
    assert analyze_schedule(64, 256_000, 100e6, util_fraction=0.135).max_instances_by_util == 7


@acceptance(8, "fixed datapath executes no divides")
def test_division_free(default_coeffs):
    t0 = time.perf_counter()
    hist = audit_datapath(FixedCarfac(default_coeffs), n_samples=10_000)
    print("op histogram", hist)
    assert hist["div"] == 0
    assert sum(hist.values()) > 0
    assert _elapsed(t0) < 5.0


@acceptance(9, "fixed vs float SNR above the quantization-bound floor")
def test_fixed_float_fidelity(default_coeffs):
    t0 = time.perf_counter()
    c = default_coeffs
    fs = c.sample_rate_hz
    n = int(1.5 * fs)
    x = 0.1 * np.sin(2 * np.pi * 1000.0 * np.arange(n) / fs)     # -20 dBFS
    window = slice(int(0.5 * fs), n)                               # 1 s steady state
    qb = quantization_bound(c, x, window=window)
    eng = FixedCarfac(c)
    y = eng.process(x)
    snr = snr_db(qb.reference[window], y[window])
    err = np.abs(y[window] - qb.reference[window]).max(axis=0)
    print(f"snr {snr:.2f} dB, floor {qb.snr_floor_db:.2f} dB, "
          f"max err/bound {np.max(err / qb.per_channel):.3f}")
    assert eng.saturation_events == 0
    assert np.all(err <= qb.per_channel)
    assert snr >= qb.snr_floor_db
    assert _elapsed(t0) < 30.0


@acceptance(10, "one second of 64-channel 256 kHz audio in under two seconds")
def test_realtime(default_coeffs):
    c = default_coeffs
    fs = c.sample_rate_hz
    x = 0.1 * np.sin(2 * np.pi * 1000.0 * np.arange(int(fs)) / fs)
    eng = Carfac(c, "approx")
    t0 = time.perf_counter()
    eng.process(x)
    elapsed = _elapsed(t0)
    print(f"backend {_backend.name}: {elapsed:.3f} s for 1 s of audio "
          f"(real-time factor {1.0 / elapsed:.2f})")
    assert elapsed < 2.0


@acceptance(11, "offset raw streams: lead-in dropped, every frame accounted for")
def test_stream_accounting(small_coeffs):
    fs = small_coeffs.sample_rate_hz
    rng = np.random.default_rng(11)
    lead = 37
    a_bytes, b_bytes = io.BytesIO(), io.BytesIO()
    write_raw_i24(a_bytes, rng.uniform(-0.5, 0.5, 4000))
    write_raw_i24(b_bytes, rng.uniform(-0.5, 0.5, 4000 - lead))
    a = read_raw_i24(a_bytes.getvalue(), fs)
    b = read_raw_i24(b_bytes.getvalue(), fs)
    b.start = lead
    synced = synchronize([a, b])
    assert synced.report.drops == [lead, 0]
    assert synced.n_frames == 4000 - lead

    outs = [[], []]
    stats = run_pipeline(synced, [(Carfac(small_coeffs), 0), (Carfac(small_coeffs), 1)],
                         [outs[0].append, outs[1].append], block=512)
    assert stats.frames_in == stats.frames_out == synced.n_frames

    sink = CochleagramSink(small_coeffs.n_channels)
    buf = io.BytesIO()
    blocks = [blk.astype(np.float32) for blk in outs[0]]
    nbytes = write_cochleagram(sink, blocks, buf)
    assert nbytes == synced.n_frames * small_coeffs.n_channels * 4
    buf.seek(0)
    back, _ = read_cochleagram(buf, n_channels=small_coeffs.n_channels)
    assert back.tobytes() == np.vstack(blocks).tobytes()
