import numpy as np
import pytest

from evomask import PatchGrid, build_tree

ACCEPTANCE_LINES: dict[str, str] = {}


@pytest.fixture
def example_matrix():
    return np.array(
        [
            [0.0, 0.9, 0.1, 0.1],
            [0.9, 0.0, 0.1, 0.1],
            [0.1, 0.1, 0.0, 0.8],
            [0.1, 0.1, 0.8, 0.0],
        ]
    )


@pytest.fixture
def example_tree(example_matrix):
    return build_tree(example_matrix)


@pytest.fixture
def grid2x2():
    return PatchGrid(2, 2, 16)


def random_symmetric(rng: np.random.Generator, n: int) -> np.ndarray:
    a = rng.random((n, n))
    return (a + a.T) / 2.0


@pytest.fixture
def acceptance_report():
    def record(criterion: str, passed: bool, detail: str) -> None:
        ACCEPTANCE_LINES[criterion] = f"{'PASS' if passed else 'FAIL'}  {criterion}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: int(k.split()[1].rstrip(":"))):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
