import numpy as np
import pytest

from kgz2d.grid import Field, FieldPair, bump_window, make_grid
from kgz2d.vector_fields import JetField


def windowed_random_field(grid, seed, components=1, modes=6):
    """Random low-mode field times a smooth radial window.

    The window keeps the samples effectively supported inside the box so
    constructions with unbounded coefficients (x_a u) stay spectrally clean.
    """
    rng = np.random.default_rng(seed)
    spec = np.zeros((components, grid.n, grid.n // 2 + 1), dtype=complex)
    spec[:, :modes, :modes] = rng.standard_normal((components, modes, modes)) \
        + 1j * rng.standard_normal((components, modes, modes))
    spec[:, -modes:, :modes] = rng.standard_normal((components, modes, modes)) \
        + 1j * rng.standard_normal((components, modes, modes))
    return grid.irfft(spec) * bump_window(grid, 0.4 * grid.length)


def windowed_random_jet(grid, seed, t=0.8, components=1):
    """Arbitrary windowed jet (the commutator identities hold for any jet)."""
    return JetField(
        grid, t,
        windowed_random_field(grid, seed, components),
        windowed_random_field(grid, seed + 1000, components),
        windowed_random_field(grid, seed + 2000, components),
    )


def gaussian_pair(grid, amplitude=1e-2, width=1.0, components=1):
    g = np.exp(-(grid.X1**2 + grid.X2**2) / (2.0 * width**2))
    vals = np.stack([amplitude * g] + [np.zeros_like(g)] * (components - 1))
    zeros = np.zeros_like(vals)
    return FieldPair(Field(grid, vals), Field(grid, zeros))


@pytest.fixture(scope="session")
def grid32():
    return make_grid(32, np.pi)


@pytest.fixture(scope="session")
def grid64():
    return make_grid(64, 12.0)


@pytest.fixture(scope="session")
def grid128():
    return make_grid(128, 24.0)
