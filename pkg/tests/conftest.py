import numpy as np
import pytest

from fbmlab.grids import SampledPath, TimeGrid


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criteria")
    config.addinivalue_line("markers", "slow: long-running Monte Carlo checks")


@pytest.fixture
def grid256():
    return TimeGrid(256)


@pytest.fixture
def grid1024():
    return TimeGrid(1024)


def path_of(grid: TimeGrid, fn) -> SampledPath:
    return SampledPath(grid, fn(grid.nodes()))


def fbm_paths(h, grid, dim, n_paths, seed):
    """Array-valued fBm samples used across tests; (P, dim, n_nodes)."""
    from fbmlab.fbm import sample_array
    from fbmlab.rng import substream

    return sample_array(h, grid, dim, n_paths, substream(seed, "tests.fbm"))
