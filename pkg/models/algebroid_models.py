"""Algebroid-level models: admissible velocities, momenta and inertia operators."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from models.field_models import Grid2, ScalarField, VectorField
from models.interface_models import Interface, PiecewiseCovector, PiecewiseVector
from utils.errors import ConfigError, GridError


class DVectField(PiecewiseVector):
    """
    A piecewise velocity whose normal traces agree across the interface.

    The constructor does not check the traces. Instances come from
    ``project_normal_continuity`` or from linear combinations of such
    fields, which keep the traces equal; ``normal_jump`` measures the residual.
    """


@dataclass(frozen=True, eq=False)
class OneFormDensity:
    """Momentum ``m (x) mu``: a two-sided covector times the (unit) area density."""

    m: PiecewiseCovector
    density_weight: Optional[ScalarField] = field(default=None, repr=False)

    def __post_init__(self):
        if self.density_weight is None:
            object.__setattr__(self, "density_weight", ScalarField.constant(self.m.grid, 1.0))
        else:
            self.m.grid.require_same(self.density_weight.grid)

    @property
    def grid(self) -> Grid2:
        return self.m.grid

    @property
    def interface(self) -> Optional[Interface]:
        return self.m.interface

    @classmethod
    def zeros(cls, grid: Grid2, interface: Optional[Interface] = None) -> "OneFormDensity":
        z = VectorField.zeros(grid)
        return cls(PiecewiseCovector(interface, z, z))

    @classmethod
    def from_parts(cls, interface: Optional[Interface], plus: VectorField,
                   minus: Optional[VectorField] = None) -> "OneFormDensity":
        return cls(PiecewiseCovector(interface, plus, plus if minus is None else minus))

    def scaled(self, scale: float) -> "OneFormDensity":
        return OneFormDensity(PiecewiseCovector(self.interface, self.m.plus_part * scale,
                                                self.m.minus_part * scale), self.density_weight)

    def axpy(self, alpha: float, other: "OneFormDensity") -> "OneFormDensity":
        """``self + alpha * other``."""
        if (self.interface is None) != (other.interface is None):
            raise GridError("cannot combine smooth and piecewise momenta")
        return OneFormDensity(PiecewiseCovector(
            self.interface,
            self.m.plus_part + other.m.plus_part * alpha,
            self.m.minus_part + other.m.minus_part * alpha,
        ), self.density_weight)


INERTIA_KINDS = ("gaussian_kernel", "helmholtz")


@dataclass(frozen=True)
class InertiaOperator:
    """
    Velocity-to-momentum operator defining the metric on velocities.

    ``gaussian_kernel``: the inverse is Gaussian smoothing of width ``sigma``
    (domain units) plus ``nugget`` times the identity, which keeps the
    forward map bounded by ``1 / nugget``.
    ``helmholtz``: ``(gamma * Id - alpha * Laplacian) ** order`` with alpha > 0.
    ``regularized`` applies both per subdomain when an interface is present.
    """

    kind: str = "gaussian_kernel"
    sigma: float = 0.05
    alpha: float = 0.01
    gamma: float = 1.0
    order: int = 1
    regularized: bool = True
    nugget: float = 1e-4
    cg_tol: float = 1e-10
    cg_maxiter: int = 5000

    def __post_init__(self):
        if self.kind not in INERTIA_KINDS:
            raise ConfigError(f"unknown inertia kind {self.kind!r}; expected one of {INERTIA_KINDS}")
        if self.kind == "gaussian_kernel" and not (self.sigma > 0 and self.nugget > 0):
            raise ConfigError(f"sigma and nugget must be positive, got {self.sigma}, {self.nugget}")
        if self.kind == "helmholtz":
            if not self.alpha > 0 or not self.gamma > 0 or self.order < 1:
                raise ConfigError(
                    f"helmholtz needs alpha > 0, gamma > 0, order >= 1 "
                    f"(got {self.alpha}, {self.gamma}, {self.order})")

    @classmethod
    def from_config(cls, cfg) -> "InertiaOperator":
        return cls(kind=cfg.kind, sigma=cfg.sigma, alpha=cfg.alpha, gamma=cfg.gamma,
                   order=cfg.order, regularized=cfg.regularized, nugget=cfg.nugget)

    def with_sigma(self, sigma: float) -> "InertiaOperator":
        return replace(self, sigma=sigma)

    def kernel_pixels(self, grid: Grid2) -> np.ndarray:
        """Gaussian standard deviation in pixels, ordered ``(rows, cols)``."""
        return np.array([self.sigma / grid.hy, self.sigma / grid.hx])
