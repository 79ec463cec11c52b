import numpy as np
import pytest

from lasersim.hilbert import SpaceSpec

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_density(space: SpaceSpec, rng, n_support: int = 4, rank: int = 3) -> np.ndarray:
    """Random mixed state supported on Fock levels below ``n_support``."""
    k = 2 * n_support
    X = rng.normal(size=(k, rank)) + 1j * rng.normal(size=(k, rank))
    M = X @ X.conj().T
    rho = np.zeros((space.dim, space.dim), dtype=complex)
    rho[:k, :k] = M / np.trace(M).real
    return rho


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def small_space():
    return SpaceSpec(10)
