"""Shared fixtures: grids, interfaces and seeded generators."""

import numpy as np
import pytest

from engines.interface_engine import build_interface
from models.field_models import ScalarField, make_grid


@pytest.fixture
def rng():
    """Seeded generator so every randomized test is reproducible."""
    return np.random.default_rng(1234)


@pytest.fixture
def grid32():
    return make_grid(32, 32)


@pytest.fixture
def grid64():
    return make_grid(64, 64)


@pytest.fixture
def horizontal32(grid32):
    """Interface ``y = 0.5`` on 32^2; the line falls halfway between two node rows."""
    _, Y = grid32.coordinates
    return build_interface(ScalarField(grid32, Y - 0.5))


@pytest.fixture
def horizontal64(grid64):
    _, Y = grid64.coordinates
    return build_interface(ScalarField(grid64, Y - 0.5))


@pytest.fixture
def circle64(grid64):
    """Circle of radius 0.25 about the center; the inner disk is D+."""
    X, Y = grid64.coordinates
    return build_interface(ScalarField(grid64, 0.25 - np.hypot(X - 0.5, Y - 0.5)))


def envelope(grid):
    """``sin^2(pi x) sin^2(pi y)``; vanishes with its gradient on the outer boundary."""
    X, Y = grid.coordinates
    return np.sin(np.pi * X) ** 2 * np.sin(np.pi * Y) ** 2
