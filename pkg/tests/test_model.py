import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from carfac_rt.errors import ConfigError, ContractError, NumericFault
from carfac_rt.exact import g_exact
from carfac_rt.model import (Carfac, CarfacState, agc_step, car_step, carfac_sample,
                             design_carfac, highpass_step, run_linear_cascade,
                             spatial_smooth, transfer_function)
from carfac_rt.params import CarfacParams

from conftest import needs_compiled


# ---------------------------------------------------------------------------
# design


def test_default_design_shape(default_coeffs):
    c = default_coeffs
    assert c.n_channels == 64
    assert np.all(np.diff(c.pole_hz) < 0)
    assert np.all(np.diff(c.theta) < 0)
    assert c.pole_hz[0] == pytest.approx(64000.0)
    assert c.pole_hz[-1] == pytest.approx(30.0)
    np.testing.assert_allclose(c.a0 ** 2 + c.c0 ** 2, 1.0, atol=1e-12)
    assert np.all(c.r1 + c.d_rz <= 1.0)
    assert np.all((c.r1 > 0) & (c.d_rz > 0))


def test_single_quarter_rate_channel():
    c = design_carfac(n_channels=1, sample_rate_hz=1000.0, max_pole_hz=250.0, min_pole_hz=10.0,
                      agc_decimate=False, hpf_cutoff_hz=5.0)
    assert c.a0[0] == pytest.approx(0.0, abs=1e-15)
    assert c.c0[0] == pytest.approx(1.0)


@pytest.mark.parametrize("kw", [
    dict(max_pole_hz=128000.0),
    dict(n_channels=0),
    dict(min_pole_hz=0.0),
    dict(agc_time_constants_s=(0.002, 0.002, 0.032, 0.128)),
    dict(agc_spatial_s1=0.7, agc_spatial_s2=0.4),
    dict(agc_spatial_s1=-0.1),
    dict(erb_per_step=5.0),
])
def test_design_rejects_bad_params(kw):
    with pytest.raises(ConfigError):
        design_carfac(**kw)


def test_erb_step_mode():
    c = design_carfac(n_channels=20, erb_per_step=1.0)
    from carfac_rt.params import hz_to_erb_rate
    np.testing.assert_allclose(np.diff(hz_to_erb_rate(c.pole_hz))[1:], -1.0, atol=1e-9)


def test_params_from_mapping():
    p = CarfacParams.from_mapping({"n_channels": "8", "sample_rate_hz": "16000",
                                   "agc_stage_gains": "1, 0.5, 0.5, 0.25", "bogus": "1"})
    assert p.n_channels == 8 and p.agc_stage_gains == (1.0, 0.5, 0.5, 0.25)


# ---------------------------------------------------------------------------
# resonator cascade


def test_zero_in_zero_out(small_coeffs):
    s = CarfacState(small_coeffs)
    y, v = car_step(s, small_coeffs, 0.0)
    assert not y.any() and not v.any()


def test_single_channel_matches_transfer_function():
    c = design_carfac(n_channels=1, sample_rate_hz=8000.0, max_pole_hz=1000.0, min_pole_hz=10.0)
    s = CarfacState(c, "exact")
    n = 8192
    h = np.empty(n)
    for t in range(n):
        y, _ = car_step(s, c, 1.0 if t == 0 else 0.0)
        h[t] = y[0]
    H = np.fft.rfft(h)
    w = 2 * np.pi * np.arange(len(H)) / n
    ref = transfer_function(c.a0[0], c.c0[0], c.h[0], s.car.r[0], s.car.g[0], w)
    assert np.max(np.abs(H - ref) / np.abs(ref)) <= 1e-6


@settings(max_examples=25, deadline=None)
@given(theta=st.floats(0.05, 3.0), r=st.floats(0.3, 0.98), hz=st.floats(0.0, 2.0))
def test_state_space_realizes_transfer_function(theta, r, hz):
    a0, c0 = np.cos(theta), np.sin(theta)
    h = hz * c0
    g = g_exact(a0, c0, h, r)
    n = 4096
    x = np.zeros(n)
    x[0] = 1.0
    out = np.empty((n, 1))
    from carfac_rt import _backend
    _backend.default.run_car_linear(x, out, np.array([a0]), np.array([c0]), np.array([h]),
                                    np.array([r]), np.array([g]), np.zeros(1), np.zeros(1))
    H = np.fft.fft(out[:, 0])[:1024]
    w = 2 * np.pi * np.arange(1024) / n
    ref = transfer_function(a0, c0, h, r, g, w)
    assert np.max(np.abs(H - ref) / np.abs(ref)) <= 1e-6


def test_dc_step_settles_to_input(small_coeffs):
    c = small_coeffs
    y = run_linear_cascade(c, np.ones(60000), u=0.5, mode="exact")
    np.testing.assert_allclose(y[-1], 1.0, atol=1e-9)


def test_velocity_is_w1_difference(small_coeffs):
    s = CarfacState(small_coeffs)
    car_step(s, small_coeffs, 1.0)
    before = s.car.W1.copy()
    _, v = car_step(s, small_coeffs, 0.5)
    np.testing.assert_array_equal(v, s.car.W1 - before)
    np.testing.assert_array_equal(s.car.W1_prev, before)


def test_non_finite_input_rejected(small_coeffs):
    with pytest.raises(NumericFault):
        car_step(CarfacState(small_coeffs), small_coeffs, np.nan)
    with pytest.raises(NumericFault):
        Carfac(small_coeffs).process(np.array([0.0, np.inf]))


def test_non_finite_state_names_channel(small_coeffs):
    s = CarfacState(small_coeffs)
    s.car.W0[3] = np.inf
    with pytest.raises(NumericFault) as exc:
        car_step(s, small_coeffs, 0.0)
    assert exc.value.channel is not None


# ---------------------------------------------------------------------------
# high-pass and AGC


def test_highpass_step_identity(small_coeffs):
    s = CarfacState(small_coeffs)
    y = highpass_step(s, np.full(small_coeffs.n_channels, 0.3))
    np.testing.assert_array_equal(y, 0.3)


def test_highpass_rejects_dc(small_coeffs):
    s = CarfacState(small_coeffs)
    k = small_coeffs.hpf_coeff
    n = int(10 / k) + 1          # ten time constants
    for _ in range(n):
        y = highpass_step(s, np.full(small_coeffs.n_channels, 2.0))
    assert np.all(np.abs(y) <= 1e-3 * 2.0)


def test_highpass_zero(small_coeffs):
    s = CarfacState(small_coeffs)
    assert not highpass_step(s, np.zeros(small_coeffs.n_channels)).any()


def test_agc_zero_input(small_coeffs):
    s = CarfacState(small_coeffs)
    for _ in range(100):
        b = agc_step(s, np.zeros(small_coeffs.n_channels))
    assert not b.any()


def test_agc_rejects_negative(small_coeffs):
    with pytest.raises(ContractError):
        agc_step(CarfacState(small_coeffs), -np.ones(small_coeffs.n_channels))


def test_agc_constant_input_converges(small_coeffs):
    s = CarfacState(small_coeffs)
    d = np.full(small_coeffs.n_channels, 0.2)
    for _ in range(80000):
        agc_step(s, d)
    # stage k settles at (k+1) * c; the spatial pass leaves a flat field alone
    for k in range(4):
        np.testing.assert_allclose(s.agc.mem[k], 0.2 * (k + 1), rtol=1e-3)
        assert np.ptp(s.agc.mem[k]) < 1e-12


def test_spatial_impulse_ratio():
    s1, s2 = 0.1, 0.3
    x = np.zeros(9)
    x[4] = 1.0
    out = spatial_smooth(x, s1, s2)
    assert out[3] / out[5] == pytest.approx(s1 / s2)
    assert out[4] == pytest.approx(1 - s1 - s2)


@given(st.lists(st.floats(0, 10), min_size=2, max_size=30),
       st.floats(0, 0.5), st.floats(0, 0.5))
def test_spatial_preserves_sum(xs, s1, s2):
    x = np.array(xs)
    out = spatial_smooth(x, s1, s2)
    assert out.sum() == pytest.approx(x.sum(), rel=1e-12, abs=1e-12)
    assert np.all(out >= 0)


def test_spatial_single_channel_is_identity():
    np.testing.assert_array_equal(spatial_smooth(np.array([2.5]), 0.2, 0.2), [2.5])


def test_agc_no_decimation_mode():
    c = design_carfac(n_channels=6, sample_rate_hz=16000.0, agc_decimate=False)
    assert c.agc_intervals == (1, 1, 1, 1)
    assert c.agc_ct[0] == pytest.approx(1 / (0.002 * 16000))


# ---------------------------------------------------------------------------
# full chain


def test_zero_samples_keep_state_zero(small_coeffs):
    s = CarfacState(small_coeffs)
    for _ in range(1000):
        y = carfac_sample(s, small_coeffs, 0.0)
    assert not y.any()
    assert not s.car.W0.any() and not s.car.W1.any() and not s.mem.any()


@pytest.mark.parametrize("mode", ["exact", "approx"])
def test_block_matches_per_sample(small_coeffs, tone, mode):
    x = tone(700.0, 0.3, 600, 16000.0)
    s = CarfacState(small_coeffs, mode)
    ref = np.array([carfac_sample(s, small_coeffs, v) for v in x])
    eng = Carfac(small_coeffs, mode)
    out = np.vstack([eng.process(x[:250]), eng.process(x[250:])])
    np.testing.assert_array_equal(out, ref)
    np.testing.assert_array_equal(eng.state.buf, s.buf)


@needs_compiled
@pytest.mark.parametrize("mode", ["exact", "approx"])
def test_backends_bit_identical(small_coeffs, tone, mode):
    x = tone(1500.0, 0.5, 1500, 16000.0)
    a = Carfac(small_coeffs, mode, backend="python").process(x)
    b = Carfac(small_coeffs, mode, backend="compiled").process(x)
    np.testing.assert_array_equal(a, b)


def test_state_invariants_under_tone(small_coeffs, tone):
    c = small_coeffs
    s = CarfacState(c, "approx")
    for v in tone(900.0, 0.8, 3000, 16000.0):
        carfac_sample(s, c, v)
        assert np.all(s.car.r >= c.r1 - 1e-15) and np.all(s.car.r <= c.r1 + c.d_rz + 1e-15)
        assert np.all(s.car.g > 0) and np.all(s.car.g <= 1.0)
        assert np.all((s.ihc.v_mem >= 0) & (s.ihc.v_mem <= 0.75))
        assert np.all(s.mem >= 0)
        assert np.all((s.ohc.u >= 0) & (s.ohc.u <= 1))


def test_compressive_at_channel_32(default_coeffs, tone):
    c = default_coeffs
    fs = c.sample_rate_hz
    f0 = 4011.71875          # FFT peak of channel 32 at full undamping
    rms = []
    for amp in (0.01, 0.02):
        y = Carfac(c, "approx").process(tone(f0, amp, int(0.4 * fs), fs))
        rms.append(np.sqrt(np.mean(y[-int(0.05 * fs):, 32] ** 2)))
    assert rms[1] / rms[0] < 2.0


def test_exact_vs_approx_low_level(default_coeffs, tone):
    c = default_coeffs
    fs = c.sample_rate_hz
    x = tone(1000.0, 0.001, int(0.25 * fs), fs)
    e = Carfac(c, "exact")
    ye = e.process(x)
    ya = Carfac(c, "approx").process(x)
    assert np.abs(e.state.buf[6]).max() <= 0.1        # bm_hpf stays small
    # frozen from a dual run: 0.00125 of the peak output
    assert np.abs(ye - ya).max() <= 0.002 * np.abs(ye).max()


@pytest.mark.slow
def test_bounded_over_a_million_samples(default_coeffs):
    rng = np.random.default_rng(7)
    x = rng.uniform(-1, 1, 1_000_000)
    eng = Carfac(default_coeffs, "approx")
    peak = 0.0
    for i in range(0, len(x), 100_000):
        peak = max(peak, float(np.abs(eng.process(x[i:i + 100_000])).max()))
    assert np.isfinite(peak) and peak < 1e3


def test_mode_mismatch(small_coeffs):
    with pytest.raises(ConfigError):
        carfac_sample(CarfacState(small_coeffs, "approx"), small_coeffs, 0.0, mode="exact")
    with pytest.raises(ConfigError):
        CarfacState(small_coeffs, "fast")
