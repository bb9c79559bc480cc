import numpy as np
import pytest

from ngf.assembly import assemble_laplacian, assemble_lumped_mass
from ngf.geometry import build_grid_domain


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def grid8():
    d = build_grid_domain(8)
    return d, assemble_laplacian(d), assemble_lumped_mass(d)


def dense_laplacian_loops(n, h):
    """Reference -Laplacian built entry by entry, independent of the vectorized assembly."""
    N = n * n
    A = np.zeros((N, N))
    for i in range(n):
        for j in range(n):
            r = i * n + j
            A[r, r] = 4.0 / h ** 2
            for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                a, b = i + di, j + dj
                if 0 <= a < n and 0 <= b < n:
                    A[r, a * n + b] = -1.0 / h ** 2
    return A


def pytest_configure(config):
    config._ngf_acceptance = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_ngf_acceptance", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collects one ``CRITERION n: PASS|FAIL ...`` line per criterion for the summary."""
    return request.config._ngf_acceptance
