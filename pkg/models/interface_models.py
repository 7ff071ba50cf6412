"""Sliding-interface geometry and piecewise (two-sided) field models."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from models.field_models import Grid2, ScalarField, VectorField
from utils.errors import GridError


@dataclass(frozen=True, eq=False)
class BoundarySamples:
    """Quadrature nodes on the zero level set: one per marching-squares segment."""

    points: np.ndarray = field(repr=False)   # (K, 2) segment midpoints
    weights: np.ndarray = field(repr=False)  # (K,) segment lengths
    normals: np.ndarray = field(repr=False)  # (K, 2) unit normals pointing into D+

    @property
    def count(self) -> int:
        return int(self.weights.shape[0])

    @property
    def total_length(self) -> float:
        return float(self.weights.sum())


@dataclass(frozen=True, eq=False)
class Interface:
    """
    Level-set representation of the sliding hypersurface.

    ``sdf`` is a signed distance, positive on D+. ``normals`` is the unit
    gradient of ``sdf``. Every node also stores the foot point of its closest
    point on the curve and the two boundary samples that bracket that foot,
    which is how boundary data is extended onto the grid.
    """

    sdf: ScalarField
    normals: VectorField
    band_width: float
    samples: BoundarySamples
    foot_points: np.ndarray = field(repr=False)     # (ny, nx, 2)
    sample_pairs: np.ndarray = field(repr=False)    # (ny, nx, 2) sample indices
    pair_weights: np.ndarray = field(repr=False)    # (ny, nx, 2) weights summing to 1
    segments: np.ndarray = field(repr=False)        # (K, 2, 2) polyline segments

    @property
    def grid(self) -> Grid2:
        return self.sdf.grid

    @property
    def band(self) -> np.ndarray:
        return np.abs(self.sdf.values) <= self.band_width

    @property
    def plus_mask(self) -> np.ndarray:
        return self.sdf.values >= 0.0

    @property
    def length(self) -> float:
        return self.samples.total_length


@dataclass(frozen=True, eq=False)
class RegionMasks:
    """Indicator functions of D+ and D-; they partition the nodes exactly."""

    chi_plus: ScalarField
    chi_minus: ScalarField

    @property
    def plus(self) -> np.ndarray:
        return self.chi_plus.values > 0.5

    @property
    def minus(self) -> np.ndarray:
        return self.chi_minus.values > 0.5

    def side(self, name: str) -> np.ndarray:
        if name == "plus":
            return self.plus
        if name == "minus":
            return self.minus
        raise ValueError(f"unknown side {name!r}")

    @classmethod
    def whole(cls, grid: Grid2) -> "RegionMasks":
        """Masks for smooth mode: every node belongs to D+."""
        return cls(ScalarField.constant(grid, 1.0), ScalarField.zeros(grid))


def _check_grids(interface: Optional[Interface], *fields) -> None:
    grid = fields[0].grid
    for f in fields[1:]:
        grid.require_same(f.grid)
    if interface is not None:
        grid.require_same(interface.grid)


@dataclass(frozen=True, eq=False)
class PiecewiseScalar:
    """``chi+ * plus_part + chi- * minus_part``; parts are full-grid one-sided extensions.

    With ``interface=None`` the field is smooth and ``minus_part`` is ignored.
    """

    interface: Optional[Interface]
    plus_part: ScalarField
    minus_part: ScalarField

    def __post_init__(self):
        _check_grids(self.interface, self.plus_part, self.minus_part)

    @property
    def grid(self) -> Grid2:
        return self.plus_part.grid

    @classmethod
    def smooth(cls, f: ScalarField) -> "PiecewiseScalar":
        return cls(None, f, f)

    def composite(self) -> ScalarField:
        if self.interface is None:
            return self.plus_part
        plus = self.interface.plus_mask
        return ScalarField(self.grid, np.where(plus, self.plus_part.values, self.minus_part.values))


@dataclass(frozen=True, eq=False)
class PiecewiseVector:
    """Two-sided vector field; same conventions as :class:`PiecewiseScalar`."""

    interface: Optional[Interface]
    plus_part: VectorField
    minus_part: VectorField

    def __post_init__(self):
        _check_grids(self.interface, self.plus_part, self.minus_part)

    @property
    def grid(self) -> Grid2:
        return self.plus_part.grid

    @classmethod
    def smooth(cls, v: VectorField, interface: Optional[Interface] = None) -> "PiecewiseVector":
        return cls(interface, v, v)

    @classmethod
    def zeros(cls, grid: Grid2, interface: Optional[Interface] = None) -> "PiecewiseVector":
        z = VectorField.zeros(grid)
        return cls(interface, z, z)

    def part(self, side: str) -> VectorField:
        return self.plus_part if side == "plus" else self.minus_part

    def composite(self) -> VectorField:
        if self.interface is None:
            return self.plus_part
        plus = self.interface.plus_mask
        return VectorField(self.grid,
                           np.where(plus, self.plus_part.vx, self.minus_part.vx),
                           np.where(plus, self.plus_part.vy, self.minus_part.vy))

    def max_norm(self) -> float:
        if self.interface is None:
            return self.plus_part.max_norm()
        return max(self.plus_part.max_norm(), self.minus_part.max_norm())

    def _rebuild(self, plus: VectorField, minus: VectorField) -> "PiecewiseVector":
        return type(self)(self.interface, plus, minus)

    def __add__(self, other: "PiecewiseVector") -> "PiecewiseVector":
        if (self.interface is None) != (other.interface is None):
            raise GridError("cannot add smooth and piecewise fields")
        return self._rebuild(self.plus_part + other.plus_part, self.minus_part + other.minus_part)

    def __sub__(self, other: "PiecewiseVector") -> "PiecewiseVector":
        return self + (-1.0) * other

    def __mul__(self, scale: float) -> "PiecewiseVector":
        return self._rebuild(self.plus_part * scale, self.minus_part * scale)

    __rmul__ = __mul__

    def axpy(self, alpha: float, other: "PiecewiseVector") -> "PiecewiseVector":
        """``self + alpha * other``."""
        return self + other * alpha


class PiecewiseCovector(PiecewiseVector):
    """Two-sided covector (1-form) field: components are ``(m_x, m_y)``."""


@dataclass(frozen=True, eq=False)
class BoundaryFunction:
    """Scalar values at the interface's boundary samples."""

    interface: Interface
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64, copy=True).reshape(-1)
        if vals.shape[0] != self.interface.samples.count:
            raise GridError(f"boundary function has {vals.shape[0]} values for "
                            f"{self.interface.samples.count} samples")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, interface: Interface) -> "BoundaryFunction":
        return cls(interface, np.zeros(interface.samples.count))

    def __add__(self, other: "BoundaryFunction") -> "BoundaryFunction":
        return BoundaryFunction(self.interface, self.values + other.values)

    def __sub__(self, other: "BoundaryFunction") -> "BoundaryFunction":
        return BoundaryFunction(self.interface, self.values - other.values)

    def __mul__(self, scale: float) -> "BoundaryFunction":
        return BoundaryFunction(self.interface, self.values * float(scale))

    __rmul__ = __mul__
