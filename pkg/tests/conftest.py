from pathlib import Path

import numpy as np
import pytest

from evowave.grid import Grid, half_space_grid
from evowave.materials import MaterialLaw

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
DATA = Path(__file__).resolve().parent / "data"


def random_spd(rng, m, k, floor=0.5):
    X = rng.standard_normal((m, k, k))
    return X @ np.swapaxes(X, 1, 2) / k + floor * np.eye(k)


def random_material(grid: Grid, rng) -> MaterialLaw:
    """Anisotropic, cellwise varying SPD blocks on every cell."""
    d, s = grid.dim, grid.n_voigt
    nE, nA = grid.elastic_cells.size, grid.acoustic_cells.size
    return MaterialLaw(
        rho_star=random_spd(rng, nE, d),
        compliance=random_spd(rng, nE, s),
        kappa_inv=random_spd(rng, nA, d),
        compressibility=0.5 + rng.random(nA),
        elastic_cells=grid.elastic_cells,
        acoustic_cells=grid.acoustic_cells,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def mixed_2d():
    return half_space_grid((8, 6), (0.125, 0.2), axis=0)


@pytest.fixture
def mixed_3d():
    return half_space_grid((4, 3, 5), (0.25, 0.3, 0.2), axis=2)


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
