import pytest

from lsblock.diagonalizer import run
from lsblock.geometry import LatticeSpec
from lsblock.models import ModelSpec, build_initial_data

REFERENCE_T = 0.02

ACCEPTANCE_LINES: list[str] = []


def make_run(d, N, n_s, t, **model_kw):
    data = build_initial_data(ModelSpec(n_s=n_s, **model_kw), d)
    return run(LatticeSpec(d, N), data, t)


@pytest.fixture(scope="session")
def reference_run():
    """d=2, N=2, n_s=4, phi^4 at the reference coupling."""
    return make_run(2, 2, 4, REFERENCE_T)


@pytest.fixture(scope="session")
def control_run():
    return make_run(2, 2, 4, 0.0)


@pytest.fixture(scope="session")
def chain_run():
    return make_run(1, 3, 3, REFERENCE_T)


@pytest.fixture(scope="session")
def small_square_run():
    return make_run(2, 2, 2, REFERENCE_T)


@pytest.fixture
def acceptance_line():
    def record(name: str, ok: bool, detail: str = "") -> None:
        ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'} {name}" + (f": {detail}" if detail else ""))

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
