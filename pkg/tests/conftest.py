import pytest

from vridyn import IntegratorConfig, Pes

XI_MAX = 0.3265
XI_LEFT = 0.1
XI_RIGHT = 0.5


@pytest.fixture(scope="session")
def pes():
    return Pes.from_spec()


@pytest.fixture(scope="session")
def pes_family():
    return {xi: Pes.from_spec(vri_x=xi) for xi in (XI_LEFT, XI_MAX, XI_RIGHT)}


@pytest.fixture(scope="session")
def cfg():
    return IntegratorConfig()


_ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def acceptance_log():
    """Record ``criterion -> (passed, detail)``; printed in the terminal summary."""
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE, key=lambda k: (int(k.split(".")[0]), k)):
        ok, detail = _ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
