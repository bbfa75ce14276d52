import math

import pytest

from chiralcurrent import model as md

TWO_PI = 2 * math.pi


@pytest.fixture
def params3():
    return md.default_params(3)


@pytest.fixture
def drive3():
    return md.DriveProtocol.uniform(2.4048, md.DEFAULT_NU, [TWO_PI * k / 3 for k in (1, 2, 3)])


def small_params(n=1, **kw):
    """Artificial low frequencies so frame maps can be checked by finite differences."""
    base = dict(Delta=TWO_PI * 80, Omega=TWO_PI * 40, g=TWO_PI * 5, omega_e=TWO_PI * 300,
                omega_g=TWO_PI * 20, dispersive=False)
    base.update(kw)
    return md.SystemParams.from_detunings(n, base.pop("Delta"), base.pop("Omega"), base.pop("g"), **base)


ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def acceptance_record():
    """Register the one-line verdict of an acceptance criterion."""

    def record(k: int, passed: bool, detail: str) -> str:
        line = f"ACCEPTANCE {k:2d} {'PASS' if passed else 'FAIL'}: {detail}"
        ACCEPTANCE_LINES[k] = line
        print(line)
        return line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
