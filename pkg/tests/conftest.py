import numpy as np
import pytest

from carfac_rt import _backend
from carfac_rt.model import design_carfac


@pytest.fixture(scope="session")
def default_coeffs():
    return design_carfac()


@pytest.fixture(scope="session")
def small_coeffs():
    # quick to run through both backends, still a real cascade
    return design_carfac(n_channels=12, sample_rate_hz=16000.0)


@pytest.fixture
def tone():
    def make(freq, amp, n, fs):
        return amp * np.sin(2 * np.pi * freq * np.arange(n) / fs)
    return make


needs_compiled = pytest.mark.skipif(not _backend.compiled_available(),
                                    reason="compiled kernels not built")


# one pass/fail line per acceptance criterion at the end of the run

_criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    key = mark.args[0]
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _criteria[key] = (mark.args[1], "PASS" if rep.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_criteria):
        title, verdict = _criteria[key]
        terminalreporter.write_line(f"criterion {key:2d} {verdict}: {title}")
