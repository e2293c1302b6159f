import pytest

from dsswave.geometry import SpacetimeParams, horizons

_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def params():
    return SpacetimeParams(1.0, 0.02)


@pytest.fixture(scope="session")
def hz(params):
    return horizons(params)


@pytest.fixture(scope="session")
def ds_params():
    return SpacetimeParams(0.0, 3.0, de_sitter=True)


@pytest.fixture
def acceptance():
    """Record ``(criterion, passed, detail)``; printed once per criterion after the run."""

    def record(number, passed, detail=""):
        _ACCEPTANCE[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
