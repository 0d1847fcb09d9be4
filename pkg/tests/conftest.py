import numpy as np
import pytest

from sinaiwalk.env_model import EnvironmentSpec, PotentialPath, sample_environment


def make_potential(values, lo):
    """PotentialPath over ``lo .. lo+len-1`` with the given S values."""
    s = np.asarray(values, dtype=float)
    assert s[-lo] == 0.0, "S_0 must be 0"
    return PotentialPath(lo=lo, hi=lo + s.size - 1, s=s.copy())


@pytest.fixture
def two_point_env():
    return sample_environment(EnvironmentSpec("two_point", 0.3, 7), (-200, 200))


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
