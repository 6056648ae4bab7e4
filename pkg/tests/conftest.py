import pytest

from signflow.grid import build_grid, eval_coefficient, natural_boundary
from signflow.solver import assemble_operator

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def legendre_setup():
    """(grid, a, op) for a = 1 - x^2 with weighted Neumann ends at n = 256."""
    grid = build_grid(256)
    a = eval_coefficient("legendre", grid)
    return grid, a, assemble_operator(a, natural_boundary(a))


@pytest.fixture(scope="session")
def legendre_512():
    grid = build_grid(512)
    a = eval_coefficient("legendre", grid)
    return grid, a, assemble_operator(a, natural_boundary(a))


@pytest.fixture(scope="session")
def sqrt_setup():
    """(grid, a, op) for a = sqrt(1 - x^2) with Dirichlet ends at n = 256."""
    grid = build_grid(256)
    a = eval_coefficient("sqrt", grid)
    return grid, a, assemble_operator(a, natural_boundary(a))
