"""Arrows of the deformation groupoid and mechanics trajectories."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from models.algebroid_models import DVectField, OneFormDensity
from models.field_models import Grid2, VectorField
from models.interface_models import BoundaryFunction, Interface, PiecewiseVector
from utils.errors import GridError


@dataclass(frozen=True, eq=False)
class GroupoidElement:
    """
    Piecewise deformation ``(gamma_src, gamma_trg, phi+, phi-)``.

    Maps are full-grid position maps; ``phi_*`` map source to target and
    ``inv_phi_*`` map target back to source. In smooth mode both interfaces
    are ``None`` and the minus maps equal the plus maps.
    """

    grid: Grid2
    gamma_src: Optional[Interface]
    gamma_trg: Optional[Interface]
    phi_plus: VectorField
    phi_minus: VectorField
    inv_phi_plus: VectorField
    inv_phi_minus: VectorField

    def __post_init__(self):
        if (self.gamma_src is None) != (self.gamma_trg is None):
            raise GridError("source and target interfaces must both be present or both absent")
        for m in (self.phi_plus, self.phi_minus, self.inv_phi_plus, self.inv_phi_minus):
            self.grid.require_same(m.grid)

    @property
    def smooth(self) -> bool:
        return self.gamma_src is None

    def forward(self, side: str) -> VectorField:
        return self.phi_plus if side == "plus" else self.phi_minus

    def backward(self, side: str) -> VectorField:
        return self.inv_phi_plus if side == "plus" else self.inv_phi_minus

    def displacement(self, side: str = "plus") -> VectorField:
        return self.forward(side) - VectorField.identity_map(self.grid)


@dataclass(frozen=True, eq=False)
class CotangentDualElement:
    """Covector on the dual algebroid: a velocity and a boundary covector."""

    v: PiecewiseVector
    n: Optional[BoundaryFunction] = None

    def __post_init__(self):
        if self.n is not None and self.v.interface is not self.n.interface:
            raise GridError("velocity and boundary covector must share the interface")

    @property
    def interface(self) -> Optional[Interface]:
        return self.v.interface


@dataclass
class MomentumTrajectory:
    """Momenta, interfaces and velocities along a shooting solution."""

    times: np.ndarray
    momenta: List[OneFormDensity] = field(default_factory=list)
    interfaces: List[Optional[Interface]] = field(default_factory=list)
    velocities: List[DVectField] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.times) - 1

    def append(self, t: float, m: OneFormDensity, gamma: Optional[Interface], v: DVectField) -> None:
        self.times = np.append(self.times, t)
        self.momenta.append(m)
        self.interfaces.append(gamma)
        self.velocities.append(v)
