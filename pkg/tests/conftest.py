import numpy as np
import pytest

from arcmpc.control import Controller
from arcmpc.plants import make_plant


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=["unicycle", "firstorder", "pendulum"])
def ctrl(request):
    return Controller(make_plant(request.param), 0.2)


@pytest.fixture
def unicycle_ctrl():
    return Controller(make_plant("unicycle"), 0.2)


ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = {}
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criteria (slow)")


@pytest.fixture
def acceptance(request):
    """Record the outcome of an acceptance criterion; a summary line is printed at the end."""
    results = request.config.stash[ACCEPTANCE]

    def record(number: int, title: str, passed: bool, detail: str = "") -> bool:
        line = f"criterion {number} {title}: {'PASS' if passed else 'FAIL'} {detail}".rstrip()
        results[number] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(ACCEPTANCE, {})
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
