import pytest
from hypothesis import given, strategies as st

from carfac_rt.errors import ConfigError
from carfac_rt.schedule import ScheduleReport, analyze_schedule


def test_reference_configuration():
    rep = analyze_schedule(64, 256_000, 100e6)
    assert rep.budget_cycles == 390
    assert rep.used_cycles == 164
    assert rep.feasible
    assert rep.slack_cycles == 226
    assert rep.max_instances_by_util == 7


def test_clock_too_slow():
    rep = analyze_schedule(64, 256_000, 20e6)
    assert rep.budget_cycles == 78
    assert not rep.feasible


def test_stage_depth_list_is_summed():
    rep = analyze_schedule(64, 256_000, 100e6, stage_depths=[40, 30, 20, 10])
    assert rep.pipeline_depth == 100


def test_util_fraction_exact_ratio():
    assert analyze_schedule(8, 16000, 1e6, util_fraction=0.2).max_instances_by_util == 5


@pytest.mark.parametrize("kw", [dict(sample_rate_hz=0), dict(clock_hz=0),
                                dict(n_channels=0), dict(util_fraction=0.0),
                                dict(stage_depths=[-1, 5]), dict(initiation_interval=-1)])
def test_bad_inputs(kw):
    args = dict(n_channels=64, sample_rate_hz=256_000, clock_hz=100e6)
    args.update(kw)
    with pytest.raises(ConfigError):
        analyze_schedule(**args)


@given(st.integers(1, 512), st.integers(1, 512), st.floats(1e3, 1e6), st.floats(1e6, 1e9))
def test_more_channels_never_helps(n1, n2, fs, clk):
    lo, hi = sorted((n1, n2))
    a = analyze_schedule(lo, fs, clk)
    b = analyze_schedule(hi, fs, clk)
    assert a.used_cycles <= b.used_cycles
    assert not (b.feasible and not a.feasible)


@given(st.floats(1e3, 1e6), st.floats(1e6, 1e9), st.floats(1.0, 4.0))
def test_faster_clock_never_hurts(fs, clk, factor):
    a = analyze_schedule(64, fs, clk)
    b = analyze_schedule(64, fs, clk * factor)
    assert b.budget_cycles >= a.budget_cycles
    assert not (a.feasible and not b.feasible)


def test_text_round_trip():
    rep = analyze_schedule(32, 48_000, 50e6, stage_depths=[10, 20], util_fraction=0.3)
    text = rep.to_text()
    assert "feasible: yes" in text
    assert ScheduleReport.from_text(text) == rep
