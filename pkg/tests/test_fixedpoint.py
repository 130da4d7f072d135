import dataclasses

import numpy as np
import pytest
from hypothesis import given, strategies as st

from carfac_rt.errors import ConfigError, ContractError, DatapathError
from carfac_rt.fixedpoint import (EngineFormats, FixedCarfac, FxSpec, FxValue, audit_datapath,
                                  fx_add, fx_carfac_sample, fx_const, fx_mul, fx_quantize,
                                  op_counter, quantize_coeffs, write_histogram_csv)
from carfac_rt.model import Carfac
from carfac_rt.qbound import quantization_bound, snr_db

from conftest import needs_compiled


# ---------------------------------------------------------------------------
# primitives


def test_quantize_saturates_high():
    spec = FxSpec(18, 16)
    v = fx_quantize(2.0, spec)
    assert v.raw == 131071
    assert v.value == pytest.approx(1.9999847, abs=1e-7)
    assert fx_quantize(-5.0, spec).raw == -131072


def test_wrap_policy():
    spec = FxSpec(8, 0, overflow="wrap")
    assert fx_quantize(130, spec).raw == -126


def test_add_grows_one_bit():
    q = FxSpec(17, 16)
    a = fx_quantize(0.9999847, q)
    assert a.raw == 65535
    s = fx_add(a, a)
    assert s.spec.word_bits == 18 and s.spec.frac_bits == 16
    assert s.value == pytest.approx(1.9999694, abs=1e-7)


def test_add_aligns_binary_points():
    a = fx_quantize(0.5, FxSpec(8, 4))
    b = fx_quantize(0.25, FxSpec(10, 8))
    s = fx_add(a, b)
    assert s.spec.frac_bits == 8 and s.value == 0.75
    assert s.spec.word_bits == 13


def test_add_past_accumulator_raises():
    a = FxValue(0, FxSpec(48, 0))
    with pytest.raises(DatapathError):
        fx_add(a, a)


def test_mul_power_of_two_takes_shift_path():
    ops = op_counter()
    spec = FxSpec(18, 16)
    half = fx_quantize(0.5, spec)
    x = fx_quantize(0.7, spec)
    got = fx_mul(half, x, spec, ops=ops)
    assert ops["shift"] == 1 and ops["mul"] == 0
    assert got.raw == fx_mul(fx_quantize(0.5000001, FxSpec(18, 16, "truncate")), x, spec).raw


@given(st.integers(-(1 << 17), (1 << 17) - 1), st.integers(0, 16), st.booleans())
def test_shift_path_matches_multiplier(raw, j, neg):
    spec = FxSpec(18, 16)
    p = FxValue(-(1 << j) if neg else 1 << j, spec)
    q = FxValue(raw, spec)
    got = fx_mul(p, q, FxSpec(36, 20))
    expect = (p.raw * q.raw + (1 << 11)) >> 12
    exp_spec = FxSpec(36, 20)
    expect = min(max(expect, exp_spec.min_raw), exp_spec.max_raw)
    assert got.raw == expect


def test_mul_rejects_wide_operands():
    wide = fx_quantize(0.3, FxSpec(24, 20))
    narrow = fx_quantize(0.3, FxSpec(18, 16))
    with pytest.raises(DatapathError):
        fx_mul(wide, narrow, FxSpec(18, 16))
    fx_mul(wide, narrow, FxSpec(18, 16), hardware_strict=False)


def test_rounding_modes():
    x = 3.0 / 4096
    assert fx_quantize(x, FxSpec(18, 10, "nearest")).raw == 1
    assert fx_quantize(x, FxSpec(18, 10, "truncate")).raw == 0
    assert fx_quantize(-x, FxSpec(18, 10, "truncate")).raw == -1


@given(st.floats(-1e4, 1e4).filter(lambda v: abs(v) > 1e-9))
def test_fx_const_relative_precision(v):
    m, s = fx_const(v)
    assert -(1 << 17) <= m < (1 << 17)
    assert abs(m * 2.0 ** -s - v) <= abs(v) * 2.0 ** -16


@pytest.mark.parametrize("bad", [dict(word_bits=0, frac_bits=0), dict(word_bits=49, frac_bits=1),
                                 dict(word_bits=8, frac_bits=8), dict(word_bits=8, frac_bits=2,
                                                                      rounding="up")])
def test_bad_specs(bad):
    with pytest.raises(ConfigError):
        FxSpec(**bad)


def test_value_contract():
    with pytest.raises(ContractError):
        FxValue(200, FxSpec(8, 0))
    with pytest.raises(ContractError):
        fx_quantize(float("nan"), FxSpec(8, 0))


def test_engine_formats_validation():
    with pytest.raises(ConfigError):
        EngineFormats(signal_frac=18)
    with pytest.raises(ConfigError):
        EngineFormats(rounding="stochastic")


# ---------------------------------------------------------------------------
# engine


def test_zero_input_gives_zero(small_coeffs):
    eng = FixedCarfac(small_coeffs)
    out = eng.process_raw(np.zeros(2000, dtype=np.int64))
    assert not out.any()
    assert eng.saturation_events == 0


def test_deterministic(small_coeffs, tone):
    x = tone(800.0, 0.2, 1500, 16000.0)
    a = FixedCarfac(small_coeffs).process_raw(FixedCarfac(small_coeffs).quantize_input(x))
    eng = FixedCarfac(small_coeffs)
    b = eng.process_raw(eng.quantize_input(x))
    np.testing.assert_array_equal(a, b)
    eng.reset()
    np.testing.assert_array_equal(eng.process_raw(eng.quantize_input(x)), a)


def test_block_split_is_invisible(small_coeffs, tone):
    x = tone(2000.0, 0.3, 1000, 16000.0)
    e1 = FixedCarfac(small_coeffs)
    whole = e1.process(x)
    e2 = FixedCarfac(small_coeffs)
    parts = np.vstack([e2.process(x[:333]), e2.process(x[333:])])
    np.testing.assert_array_equal(whole, parts)


@needs_compiled
@pytest.mark.parametrize("rounding", ["nearest", "truncate"])
def test_backends_bit_identical(small_coeffs, tone, rounding):
    fm = EngineFormats(rounding=rounding)
    x = tone(1200.0, 0.5, 2500, 16000.0)
    a = FixedCarfac(small_coeffs, fm, backend="python")
    b = FixedCarfac(small_coeffs, fm, backend="compiled")
    np.testing.assert_array_equal(a.process(x), b.process(x))
    np.testing.assert_array_equal(a.ibuf, b.ibuf)
    np.testing.assert_array_equal(a.imem, b.imem)
    np.testing.assert_array_equal(a.stats, b.stats)


def test_tracks_float_reference(small_coeffs, tone):
    x = tone(1000.0, 0.1, 4000, 16000.0)
    ref = Carfac(small_coeffs, "approx").process(x)
    got = FixedCarfac(small_coeffs).process(x)
    assert snr_db(ref, got) > 40.0


def test_state_stays_in_range(small_coeffs, tone):
    eng = FixedCarfac(small_coeffs)
    eng.process(tone(600.0, 0.3, 3000, 16000.0))
    u = eng.state_value("U")
    g = eng.state_value("G")
    assert np.all((u >= 0) & (u <= 1))
    assert np.all((g > 0) & (g <= 1.0 + 2 ** -16))


def test_no_divides(small_coeffs):
    hist = audit_datapath(FixedCarfac(small_coeffs), n_samples=2000)
    assert hist["div"] == 0
    assert hist["mul"] > 0 and hist["add"] > 0 and hist["shift"] > 0


def test_histogram_csv(tmp_path, small_coeffs):
    hist = audit_datapath(FixedCarfac(small_coeffs), n_samples=200)
    path = tmp_path / "ops.csv"
    write_histogram_csv(hist, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "op,count"
    assert lines[-1] == "div,0"


def test_fx_sample_accepts_fxvalue(small_coeffs):
    e1, e2 = FixedCarfac(small_coeffs), FixedCarfac(small_coeffs)
    out1 = fx_carfac_sample(e1, fx_quantize(0.25, FxSpec(24, 23)))
    out2 = fx_carfac_sample(e2, 0.25)
    assert [v.raw for v in out1] == [v.raw for v in out2]
    assert len(out1) == small_coeffs.n_channels
    with pytest.raises(ContractError):
        fx_carfac_sample(e1, FxValue(0, FxSpec(32, 16)))


def test_input_contract(small_coeffs):
    eng = FixedCarfac(small_coeffs)
    with pytest.raises(ContractError):
        eng.process_raw(np.array([1 << 23]))
    with pytest.raises(ContractError):
        eng.process([np.nan])


def test_non_power_of_two_intervals_rejected():
    from carfac_rt.model import design_carfac
    c = design_carfac(n_channels=4, sample_rate_hz=16000.0)
    c = dataclasses.replace(c, agc_intervals=(1, 3, 4, 8))
    with pytest.raises(ConfigError):
        quantize_coeffs(c)


def test_bound_holds_on_small_config(small_coeffs, tone):
    x = tone(1000.0, 0.1, 6000, 16000.0)
    qb = quantization_bound(small_coeffs, x)
    got = FixedCarfac(small_coeffs).process(x)
    err = np.abs(got - qb.reference)
    assert np.all(err.max(axis=0) <= qb.per_channel)
    assert snr_db(qb.reference[qb.window], got[qb.window]) >= qb.snr_floor_db
