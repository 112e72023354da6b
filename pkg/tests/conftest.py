import pytest

from wayfind.dataset import build_dataset
from wayfind.synthetic import (
    build_building,
    default_policies,
    default_tasks,
    generate_sequences,
)

# one line per acceptance criterion, printed after the run
acceptance_results: list[str] = []


def record_criterion(number: int, ok: bool, detail: str) -> bool:
    acceptance_results.append(
        f"criterion {number:2d}: {'PASS' if ok else 'FAIL'} - {detail}"
    )
    return ok


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if acceptance_results:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in sorted(acceptance_results):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def default_building():
    return build_building()


@pytest.fixture(scope="session")
def default_sequences(default_building):
    net = default_building
    return generate_sequences(net, default_tasks(net), default_policies(0), n_agents=70)


@pytest.fixture(scope="session")
def default_dataset(default_sequences):
    return build_dataset(default_sequences, lag=1)
