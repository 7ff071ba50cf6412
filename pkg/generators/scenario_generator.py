"""Synthetic sliding-motion scenarios with analytic ground truth."""

import logging
from typing import Tuple

import numpy as np

from engines.interface_engine import build_interface
from models.field_models import Grid2, ScalarField, VectorField, make_grid
from models.groupoid_models import GroupoidElement
from models.registration_models import Scenario
from utils.errors import ConfigError

logger = logging.getLogger(__name__)

BACKGROUND = 0.2
FOREGROUND = 0.8
RECTANGLE = (0.25, 0.75, 0.2, 0.8)  # x0, x1, y0, y1
RAMP_FLOOR = 0.35
WHEEL_CENTER = (0.5, 0.5)
WHEEL_RADIUS = 0.25
SPOKES = 8


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _edge(d: np.ndarray, h: float) -> np.ndarray:
    """Antialiased step: 0 for ``d <= -h``, 1 for ``d >= h``."""
    return _smoothstep(0.5 + d / (2.0 * h))


def _rectangle_pattern(x: np.ndarray, y: np.ndarray, h: float) -> np.ndarray:
    """Rectangle whose brightness ramps from left to right, so no shift maps its interior onto itself."""
    x0, x1, y0, y1 = RECTANGLE
    inside = _edge(x - x0, h) * _edge(x1 - x, h) * _edge(y - y0, h) * _edge(y1 - y, h)
    ramp = np.clip((x - x0) / (x1 - x0), 0.0, 1.0)
    return BACKGROUND + (FOREGROUND - BACKGROUND) * inside * (RAMP_FLOOR + (1.0 - RAMP_FLOOR) * ramp)


def _wheel_pattern(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    cx, cy = WHEEL_CENTER
    r = np.hypot(x - cx, y - cy)
    theta = np.arctan2(y - cy, x - cx)
    envelope = _smoothstep((r - 0.04) / 0.08) * (1.0 - _smoothstep((r - 0.36) / 0.06))
    return 0.5 + 0.35 * envelope * np.cos(SPOKES * theta)


def _translation(grid: Grid2, dx: float, dy: float = 0.0) -> VectorField:
    X, Y = grid.coordinates
    return VectorField(grid, X + dx, Y + dy)


def _rotation(grid: Grid2, degrees: float) -> VectorField:
    X, Y = grid.coordinates
    cx, cy = WHEEL_CENTER
    a = np.deg2rad(degrees)
    c, s = np.cos(a), np.sin(a)
    return VectorField(grid, cx + c * (X - cx) - s * (Y - cy), cy + s * (X - cx) + c * (Y - cy))


def gen_rectangle(n: int = 64, shift: float = 0.1) -> Scenario:
    """
    Textured rectangle whose upper half slides right and lower half slides left.

    Args:
        n: Grid size (n x n on the unit square)
        shift: Tangential displacement of each half

    Returns:
        Scenario with the interface ``y = 0.5`` (upper half is D+)
    """
    if abs(shift) >= 0.25:
        raise ConfigError(f"shift must be smaller than a quarter of the domain, got {shift}")
    grid = make_grid(n, n)
    X, Y = grid.coordinates
    h = grid.max_spacing
    moving = _rectangle_pattern(X, Y, h)
    upper = Y >= 0.5
    fixed = np.where(upper, _rectangle_pattern(X - shift, Y, h), _rectangle_pattern(X + shift, Y, h))
    interface = build_interface(ScalarField(grid, Y - 0.5))
    truth = GroupoidElement(grid, interface, interface,
                            _translation(grid, shift), _translation(grid, -shift),
                            _translation(grid, -shift), _translation(grid, shift))
    logger.info(f"Generated rectangle scenario: n={n}, shift={shift}")
    return Scenario("rectangle", ScalarField(grid, moving), ScalarField(grid, fixed), interface, truth)


def gen_wheel(n: int = 64, degrees: float = 5.0) -> Scenario:
    """
    Spoked wheel whose inner disk turns by ``+degrees`` and outer annulus by ``-degrees``.

    The interface is the circle of radius 0.25 about the center; the inner disk is D+.
    """
    if abs(degrees) > 15.0:
        raise ConfigError(f"degrees must lie in [-15, 15], got {degrees}")
    grid = make_grid(n, n)
    X, Y = grid.coordinates
    cx, cy = WHEEL_CENTER
    moving = _wheel_pattern(X, Y)
    inner = np.hypot(X - cx, Y - cy) <= WHEEL_RADIUS
    back_inner = _rotation(grid, -degrees)
    back_outer = _rotation(grid, degrees)
    fixed = np.where(inner, _wheel_pattern(back_inner.vx, back_inner.vy),
                     _wheel_pattern(back_outer.vx, back_outer.vy))
    interface = build_interface(ScalarField(grid, WHEEL_RADIUS - np.hypot(X - cx, Y - cy)))
    truth = GroupoidElement(grid, interface, interface,
                            _rotation(grid, degrees), _rotation(grid, -degrees),
                            back_inner, back_outer)
    logger.info(f"Generated wheel scenario: n={n}, degrees={degrees}")
    return Scenario("wheel", ScalarField(grid, moving), ScalarField(grid, fixed), interface, truth)


def gen_bump_pair(n: int = 64, offset: Tuple[float, float] = (0.1, 0.0),
                  width: float = 0.1) -> Tuple[ScalarField, ScalarField]:
    """Gaussian bump at the center and its translate by ``offset``."""
    grid = make_grid(n, n)
    X, Y = grid.coordinates

    def bump(cx: float, cy: float) -> np.ndarray:
        return np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / (2.0 * width ** 2))

    return ScalarField(grid, bump(0.45, 0.5)), ScalarField(grid, bump(0.45 + offset[0], 0.5 + offset[1]))


def gen_noise_pair(n: int = 64, seed: int = 0) -> Tuple[ScalarField, ScalarField]:
    """Two independent uniform-noise images from one seeded generator."""
    grid = make_grid(n, n)
    rng = np.random.default_rng(seed)
    return ScalarField(grid, rng.random(grid.shape)), ScalarField(grid, rng.random(grid.shape))
