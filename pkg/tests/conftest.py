import pytest

from ionsplit.shooting import optimized_waveform, shoot
from ionsplit.units import make_trap_spec


@pytest.fixture(scope="session")
def trap():
    return make_trap_spec("Be9+", 2.0e6)


@pytest.fixture(scope="session")
def shot_52(trap):
    return shoot(trap, 5.2e-6)


@pytest.fixture(scope="session")
def wf_52(shot_52):
    return optimized_waveform(shot_52)


@pytest.fixture(scope="session")
def quantum_52(wf_52):
    from ionsplit.quantum import run_quantum
    return run_quantum(wf_52)


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per criterion; printed in the terminal summary."""
    lines = request.config.stash[_ACCEPTANCE]

    def record(label: str, passed: bool, detail: str) -> bool:
        line = f"{'PASS' if passed else 'FAIL'}  {label}: {detail}"
        lines.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
