"""Regular-grid field models.

Arrays are stored with shape ``(ny, nx)``: row ``j`` sits at
``y = origin[1] + j * hy`` and column ``i`` at ``x = origin[0] + i * hx``.
Fields are immutable; their arrays are private read-only copies.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Tuple

import numpy as np

from utils.errors import GridError


def _frozen_array(values, shape: Tuple[int, int], name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.shape != shape:
        raise GridError(f"{name} has shape {arr.shape}, expected {shape}")
    if not np.all(np.isfinite(arr)):
        raise GridError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Grid2:
    """Node-centred regular grid over a rectangle."""

    nx: int
    ny: int
    hx: float
    hy: float
    origin: Tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise GridError(f"degenerate dimension: nx={self.nx}, ny={self.ny} (need >= 4)")
        if not (self.hx > 0 and self.hy > 0):
            raise GridError(f"non-positive spacing: hx={self.hx}, hy={self.hy}")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def extent(self) -> Tuple[float, float]:
        return ((self.nx - 1) * self.hx, (self.ny - 1) * self.hy)

    @property
    def min_spacing(self) -> float:
        return min(self.hx, self.hy)

    @property
    def max_spacing(self) -> float:
        return max(self.hx, self.hy)

    @property
    def diameter(self) -> float:
        ex, ey = self.extent
        return float(np.hypot(ex, ey))

    @cached_property
    def coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        """Node coordinates ``(X, Y)``, each of shape ``(ny, nx)``."""
        x = self.origin[0] + self.hx * np.arange(self.nx)
        y = self.origin[1] + self.hy * np.arange(self.ny)
        X, Y = np.meshgrid(x, y)
        X.setflags(write=False)
        Y.setflags(write=False)
        return X, Y

    @cached_property
    def relative_weights(self) -> np.ndarray:
        """Trapezoid weights in units of one cell: 1 inside, 1/2 on edges, 1/4 at corners."""
        wx = np.ones(self.nx)
        wx[[0, -1]] = 0.5
        wy = np.ones(self.ny)
        wy[[0, -1]] = 0.5
        w = np.outer(wy, wx)
        w.setflags(write=False)
        return w

    @cached_property
    def quadrature_weights(self) -> np.ndarray:
        """Trapezoid quadrature weights, shape ``(ny, nx)``; they sum to the domain area."""
        w = self.relative_weights * (self.hx * self.hy)
        w.setflags(write=False)
        return w

    def matches(self, other: "Grid2") -> bool:
        return (
            self.nx == other.nx
            and self.ny == other.ny
            and np.isclose(self.hx, other.hx, rtol=1e-12, atol=0.0)
            and np.isclose(self.hy, other.hy, rtol=1e-12, atol=0.0)
            and np.allclose(self.origin, other.origin, rtol=0.0, atol=1e-12)
        )

    def require_same(self, other: "Grid2") -> None:
        if not self.matches(other):
            raise GridError(f"grid mismatch: {self} vs {other}")


def make_grid(nx: int, ny: int, extent: Tuple[float, float] = (1.0, 1.0),
              origin: Tuple[float, float] = (0.0, 0.0)) -> Grid2:
    """
    Build a grid whose nodes span ``origin`` to ``origin + extent``.

    Args:
        nx: Node count along x (>= 4)
        ny: Node count along y (>= 4)
        extent: Physical size of the domain along x and y

    Returns:
        Grid2 with spacing ``extent / (n - 1)``
    """
    if nx < 4 or ny < 4:
        raise GridError(f"degenerate dimension: nx={nx}, ny={ny} (need >= 4)")
    if extent[0] <= 0 or extent[1] <= 0:
        raise GridError(f"degenerate extent {extent}")
    return Grid2(nx=int(nx), ny=int(ny), hx=extent[0] / (nx - 1), hy=extent[1] / (ny - 1),
                 origin=origin)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real values at every node of a grid."""

    grid: Grid2
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values, self.grid.shape, "values"))

    @classmethod
    def zeros(cls, grid: Grid2) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def constant(cls, grid: Grid2, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(value)))

    @classmethod
    def from_function(cls, grid: Grid2, fn) -> "ScalarField":
        X, Y = grid.coordinates
        return cls(grid, np.broadcast_to(fn(X, Y), grid.shape))

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values)

    def __add__(self, other: "ScalarField") -> "ScalarField":
        self.grid.require_same(other.grid)
        return ScalarField(self.grid, self.values + other.values)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        self.grid.require_same(other.grid)
        return ScalarField(self.grid, self.values - other.values)

    def __mul__(self, scale: float) -> "ScalarField":
        return ScalarField(self.grid, self.values * float(scale))

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class VectorField:
    """Two-component field; covector fields reuse this shape with covariant meaning."""

    grid: Grid2
    vx: np.ndarray = field(repr=False)
    vy: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "vx", _frozen_array(self.vx, self.grid.shape, "vx"))
        object.__setattr__(self, "vy", _frozen_array(self.vy, self.grid.shape, "vy"))

    @classmethod
    def zeros(cls, grid: Grid2) -> "VectorField":
        return cls(grid, np.zeros(grid.shape), np.zeros(grid.shape))

    @classmethod
    def constant(cls, grid: Grid2, value: Tuple[float, float]) -> "VectorField":
        return cls(grid, np.full(grid.shape, float(value[0])), np.full(grid.shape, float(value[1])))

    @classmethod
    def from_function(cls, grid: Grid2, fn) -> "VectorField":
        X, Y = grid.coordinates
        fx, fy = fn(X, Y)
        return cls(grid, np.broadcast_to(fx, grid.shape), np.broadcast_to(fy, grid.shape))

    @classmethod
    def identity_map(cls, grid: Grid2) -> "VectorField":
        """Position map of the identity deformation."""
        X, Y = grid.coordinates
        return cls(grid, X, Y)

    @property
    def components(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.vx, self.vy

    def stacked(self) -> np.ndarray:
        return np.stack([self.vx, self.vy])

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.vx, self.vy)

    def max_norm(self) -> float:
        return float(self.magnitude().max())

    def dot(self, other: "VectorField") -> np.ndarray:
        self.grid.require_same(other.grid)
        return self.vx * other.vx + self.vy * other.vy

    def __add__(self, other: "VectorField") -> "VectorField":
        self.grid.require_same(other.grid)
        return VectorField(self.grid, self.vx + other.vx, self.vy + other.vy)

    def __sub__(self, other: "VectorField") -> "VectorField":
        self.grid.require_same(other.grid)
        return VectorField(self.grid, self.vx - other.vx, self.vy - other.vy)

    def __mul__(self, scale: float) -> "VectorField":
        s = float(scale)
        return VectorField(self.grid, self.vx * s, self.vy * s)

    __rmul__ = __mul__

    def __neg__(self) -> "VectorField":
        return VectorField(self.grid, -self.vx, -self.vy)
