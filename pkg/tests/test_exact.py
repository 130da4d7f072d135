import numpy as np
import pytest
from hypothesis import given, strategies as st

from carfac_rt.errors import SingularityError
from carfac_rt.exact import g_exact, ihc_exact, ohc_exact


def test_g_worked_example():
    # (1 - 1.44 + 0.81) / (1 - 1.3*0.9 + 0.81) = 0.37 / 0.64
    assert g_exact(0.8, 0.6, 0.5, 0.9) == pytest.approx(0.578125, abs=1e-15)


@given(a0=st.floats(-1, 1), r=st.floats(0, 0.999))
def test_g_is_one_without_zero(a0, r):
    c0 = np.sqrt(1 - a0 * a0)
    assert g_exact(a0, c0, 0.0, r) == pytest.approx(1.0, rel=1e-12)


def test_g_at_zero_radius():
    assert g_exact(0.3, 0.95, 0.7, 0.0) == 1.0


def test_g_singular_denominator():
    # 1 - (2a0 - h c0) r + r^2 vanishes at a0 = 1, h = 0, r = 1
    with pytest.raises(SingularityError):
        g_exact(1.0, 0.0, 0.0, 1.0)


def test_g_vectorized():
    r = np.array([0.5, 0.9])
    out = g_exact(0.8, 0.6, 0.5, r)
    assert out.shape == (2,)
    assert out[1] == pytest.approx(0.578125)


def test_ihc_points():
    assert ihc_exact(-0.175) == 0.0
    assert ihc_exact(-1.0) == 0.0
    assert ihc_exact(0.825) == pytest.approx(1 / 2.1, abs=1e-7)
    assert ihc_exact(0.825) == pytest.approx(0.4761905, abs=1e-7)


@given(st.lists(st.floats(-5, 50), min_size=2, max_size=40))
def test_ihc_monotone_and_bounded(xs):
    xs = np.sort(np.array(xs))
    y = ihc_exact(xs)
    assert np.all(np.diff(y) >= 0)
    assert np.all((y >= 0) & (y < 1))


def test_ohc_points():
    assert ohc_exact(-0.4) == 1.0
    assert ohc_exact(0.0) == pytest.approx(0.9984026, abs=1e-7)
    assert ohc_exact(1e9) < 1e-12


@given(st.floats(-1e4, 1e4))
def test_ohc_bounded(v):
    y = ohc_exact(v)
    assert 0 < y <= 1
