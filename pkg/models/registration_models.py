"""
Data models for registration problems, results and benchmark scenarios.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

from models.algebroid_models import DVectField, InertiaOperator, OneFormDensity
from models.field_models import ScalarField
from models.groupoid_models import GroupoidElement
from models.interface_models import Interface
from utils.errors import ConfigError

SIMILARITY_KINDS = ("lncc", "ssd")


# ============================================================================
# Registration Models
# ============================================================================

@dataclass(frozen=True, eq=False)
class RegistrationProblem:
    """Moving/fixed pair, optional sliding interface and energy settings."""
    moving: ScalarField
    fixed: ScalarField
    interface: Optional[Interface] = None  # None means smooth LDDMM
    inertia: InertiaOperator = field(default_factory=InertiaOperator)
    steps: int = 10
    sim_kind: str = "lncc"
    lncc_window: float = 5.0  # pixels
    reg_weight: float = 1.0

    def __post_init__(self):
        self.moving.grid.require_same(self.fixed.grid)
        if self.interface is not None:
            self.moving.grid.require_same(self.interface.grid)
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.sim_kind not in SIMILARITY_KINDS:
            raise ConfigError(f"unknown similarity {self.sim_kind!r}; expected one of {SIMILARITY_KINDS}")
        if self.lncc_window < 2.0:
            raise ConfigError(f"lncc_window must be >= 2 pixels, got {self.lncc_window}")
        if not self.reg_weight > 0:
            raise ConfigError(f"reg_weight must be positive, got {self.reg_weight}")

    @property
    def grid(self):
        return self.moving.grid

    @property
    def dt(self) -> float:
        return 1.0 / self.steps


class EnergyTerms(NamedTuple):
    """One energy evaluation: ``total = similarity + reg_weight * regularizer``."""
    total: float
    similarity: float
    regularizer: float


@dataclass
class RegistrationResult:
    """Outcome of one registration run."""
    element: GroupoidElement
    warped: ScalarField
    velocities: List[DVectField]
    energy_trace: List[EnergyTerms] = field(default_factory=list)
    converged: bool = False
    momenta: List[OneFormDensity] = field(default_factory=list)
    iterations: int = 0
    fiber_residuals: List[float] = field(default_factory=list)  # max normal-trace jump per accepted iterate

    @property
    def final_energy(self) -> Optional[EnergyTerms]:
        return self.energy_trace[-1] if self.energy_trace else None


# ============================================================================
# Benchmark Models
# ============================================================================

@dataclass(frozen=True, eq=False)
class Scenario:
    """Synthetic sliding-motion image pair with its ground truth."""
    name: str
    moving: ScalarField
    fixed: ScalarField
    truth_interface: Interface
    truth_element: Optional[GroupoidElement] = None

    def __post_init__(self):
        self.moving.grid.require_same(self.fixed.grid)
        self.moving.grid.require_same(self.truth_interface.grid)


@dataclass
class ReportRow:
    """One line of the comparison table."""
    scenario: str
    method: str  # "Before", "LDDMM" or "Proposed"
    re_ssd: float
    ncc: float
    ssim: float
    tangential_jump: Optional[float] = None  # unset for rows without a velocity field
    converged: bool = True

    def as_csv(self) -> List[str]:
        jump = "" if self.tangential_jump is None else f"{self.tangential_jump:.6f}"
        return [self.scenario, self.method, f"{self.re_ssd:.4f}", f"{self.ncc:.6f}", f"{self.ssim:.6f}", jump]
