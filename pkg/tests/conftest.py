import numpy as np
import pytest

from relaxshock.model import builtin_jin_xin_1d, builtin_jin_xin_2d, burgers, linear_flux
from relaxshock.profile import solve_profile


@pytest.fixture(scope="session")
def jx1():
    return builtin_jin_xin_1d(1.0, burgers())


@pytest.fixture(scope="session")
def jx2():
    return builtin_jin_xin_2d(1.0, 1.0, burgers(), linear_flux(0.3))


@pytest.fixture(scope="session")
def ref_profile(jx2):
    # reference 2-D shock: u- = 0.75, u+ = 0.25, s = 0.5
    return solve_profile(jx2, 0.75, 0.25, L=150)


@pytest.fixture(scope="session")
def ref_setup(jx2, ref_profile):
    from relaxshock.evans import build_setup
    return build_setup(jx2, ref_profile)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def criterion(request):
    """Record a one-line verdict for an acceptance criterion and assert it."""
    lines = request.config.__dict__.setdefault("_acceptance_lines", [])

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        lines.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.__dict__.get("_acceptance_lines")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
