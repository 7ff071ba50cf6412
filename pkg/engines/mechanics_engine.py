"""Geodesic mechanics: EPDiff and Euler-Arnold rates, flows, shooting and Poisson structure.

Two-dimensional conventions used throughout:
  * ``dm`` is the scalar curl ``d/dx m_y - d/dy m_x``;
  * ``i_v dm = curl * (-v_y, v_x)`` and ``dm(u, v) = curl * (u_x v_y - u_y v_x)``;
  * ``[u, v] = (u . grad) v - (v . grad) u``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from engines.algebroid_engine import (dual_anchor, invert_inertia, pairing, reg_bracket)
from engines.grid_engine import bilinear, curl2_array, divergence_array, gradient_array, integrate, locate
from engines.groupoid_engine import jacobian_determinant
from engines.interface_engine import (advect_interface, anchor, boundary_integral, boundary_pairing,
                                      check_cfl, jump, reextend)
from models.algebroid_models import InertiaOperator, OneFormDensity
from models.field_models import Grid2, ScalarField, VectorField
from models.groupoid_models import CotangentDualElement, GroupoidElement, MomentumTrajectory
from models.interface_models import BoundaryFunction, Interface, PiecewiseCovector, PiecewiseScalar, PiecewiseVector
from utils.errors import ConfigError, NumericalError

logger = logging.getLogger(__name__)

RATE_FORMS = ("euler_arnold", "epdiff")


def _sides(interface: Optional[Interface]) -> Tuple[str, ...]:
    return ("plus",) if interface is None else ("plus", "minus")


# ---------------------------------------------------------------------------
# momentum rates
# ---------------------------------------------------------------------------

def epdiff_rhs(m: VectorField, v: VectorField) -> VectorField:
    """``-[(v . grad) m + (grad v)^T m + m div v]`` for smooth fields."""
    grid = m.grid
    mxx, mxy = gradient_array(m.vx, grid)
    myx, myy = gradient_array(m.vy, grid)
    vxx, vxy = gradient_array(v.vx, grid)
    vyx, vyy = gradient_array(v.vy, grid)
    div = vxx + vyy
    rx = v.vx * mxx + v.vy * mxy + (vxx * m.vx + vyx * m.vy) + m.vx * div
    ry = v.vx * myx + v.vy * myy + (vxy * m.vx + vyy * m.vy) + m.vy * div
    return VectorField(grid, -rx, -ry)


def _cartan_rate(m: VectorField, v: VectorField, weight: float) -> VectorField:
    """``-(i_v dm + weight * (d i_v m + div(v) m))``."""
    grid = m.grid
    curl = curl2_array(m.vx, m.vy, grid)
    fx, fy = gradient_array(m.vx * v.vx + m.vy * v.vy, grid)
    div = divergence_array(v.vx, v.vy, grid)
    rx = -curl * v.vy + weight * (fx + div * m.vx)
    ry = curl * v.vx + weight * (fy + div * m.vy)
    return VectorField(grid, -rx, -ry)


def lie_derivative_rhs(m: VectorField, v: VectorField) -> VectorField:
    """Density form ``-L_v (m (x) mu) = -(i_v dm + d i_v m + div(v) m)``."""
    return _cartan_rate(m, v, 1.0)


def euler_arnold_rhs(mt: OneFormDensity, v: PiecewiseVector, gamma: Optional[Interface] = None,
                     form: str = "euler_arnold") -> Tuple[PiecewiseCovector, Optional[BoundaryFunction]]:
    """
    Rates of the momentum and of the interface.

    ``euler_arnold`` carries half weights on ``d i_v m`` and ``div(v) m``;
    ``epdiff`` is the full-coefficient no-boundary form.
    """
    if form not in RATE_FORMS:
        raise ConfigError(f"unknown rate form {form!r}")
    weight = 0.5 if form == "euler_arnold" else 1.0
    gamma = gamma if gamma is not None else mt.interface
    plus = _cartan_rate(mt.m.plus_part, v.plus_part, weight)
    if gamma is None:
        return PiecewiseCovector(None, plus, plus), None
    minus = _cartan_rate(mt.m.minus_part, v.minus_part, weight)
    return PiecewiseCovector(gamma, plus, minus), anchor(v, gamma)


def reduction_discrepancy(mt: OneFormDensity, v: PiecewiseVector) -> float:
    """Sup difference between the half-weighted and full-coefficient momentum rates."""
    half, _ = euler_arnold_rhs(mt, v, form="euler_arnold")
    full, _ = euler_arnold_rhs(mt, v, form="epdiff")
    a, b = half.composite(), full.composite()
    return float(np.max(np.hypot(a.vx - b.vx, a.vy - b.vy)))


def hamiltonian(mt: OneFormDensity, inertia: InertiaOperator) -> float:
    """``H(m) = 1/2 <m, I^-1 m>``."""
    return 0.5 * pairing(mt, invert_inertia(inertia, mt))


# ---------------------------------------------------------------------------
# flows
# ---------------------------------------------------------------------------

@dataclass
class FlowStep:
    """State recorded before one step, enough to replay the step's adjoint."""

    velocity: PiecewiseVector
    inverse_displacement: Dict[str, Tuple[np.ndarray, np.ndarray]]


class FlowIntegrator:
    """
    Stepwise semi-Lagrangian integration of per-side deformation maps.

    Each side keeps the displacement of its inverse map (updated along
    backward characteristics) and its forward position map (pushed along
    the velocity). The interface is advected with the side-averaged velocity.
    """

    def __init__(self, gamma0: Optional[Interface], grid: Optional[Grid2] = None, keep_history: bool = False):
        self.grid = gamma0.grid if gamma0 is not None else grid
        self.gamma0 = gamma0
        self.gamma = gamma0
        self.sides = _sides(gamma0)
        X, Y = self.grid.coordinates
        zero = np.zeros(self.grid.shape)
        self.inverse_displacement = {s: (zero, zero) for s in self.sides}
        self.forward_position = {s: (np.array(X), np.array(Y)) for s in self.sides}
        self.keep_history = keep_history
        self.history: List[FlowStep] = []

    def step(self, v: PiecewiseVector, dt: float) -> None:
        grid = self.grid
        check_cfl(v, dt, grid)
        if self.keep_history:
            self.history.append(FlowStep(v, dict(self.inverse_displacement)))
        X, Y = grid.coordinates
        for side in self.sides:
            vs = v.part(side)
            s = locate(grid, X - dt * vs.vx, Y - dt * vs.vy)
            ux, uy = self.inverse_displacement[side]
            self.inverse_displacement[side] = (bilinear(ux, grid, None, None, s) - dt * vs.vx,
                                               bilinear(uy, grid, None, None, s) - dt * vs.vy)
            fx, fy = self.forward_position[side]
            f = locate(grid, fx, fy)
            self.forward_position[side] = (fx + dt * bilinear(vs.vx, grid, None, None, f),
                                           fy + dt * bilinear(vs.vy, grid, None, None, f))
        if self.gamma is not None:
            self.gamma = advect_interface(self.gamma, v, dt)
        self._check_orientation()

    def _check_orientation(self) -> None:
        X, Y = self.grid.coordinates
        plus = np.ones(self.grid.shape, dtype=bool) if self.gamma is None else self.gamma.plus_mask
        for side in self.sides:
            mask = plus if side == "plus" else ~plus
            if not mask.any():
                continue
            ux, uy = self.inverse_displacement[side]
            det = jacobian_determinant(VectorField(self.grid, X + ux, Y + uy))[mask]
            if det.min() <= 0.0:
                raise NumericalError(f"non-diffeomorphic step on side {side} (min Jacobian {det.min():.3e})")

    def min_jacobian(self) -> float:
        element = self.element()
        dets = [jacobian_determinant(element.backward(side)) for side in self.sides]
        plus = np.ones(self.grid.shape, dtype=bool) if self.gamma is None else self.gamma.plus_mask
        masks = [plus, ~plus][: len(self.sides)]
        return float(min(d[m].min() for d, m in zip(dets, masks) if m.any()))

    def inverse_map(self, side: str) -> VectorField:
        X, Y = self.grid.coordinates
        ux, uy = self.inverse_displacement[side if side in self.sides else "plus"]
        return VectorField(self.grid, X + ux, Y + uy)

    def forward_map(self, side: str) -> VectorField:
        fx, fy = self.forward_position[side if side in self.sides else "plus"]
        return VectorField(self.grid, fx, fy)

    def element(self) -> GroupoidElement:
        return GroupoidElement(self.grid, self.gamma0, self.gamma,
                               self.forward_map("plus"), self.forward_map("minus"),
                               self.inverse_map("plus"), self.inverse_map("minus"))


def flow_integrate(velocities: Sequence[PiecewiseVector], gamma0: Optional[Interface],
                   grid: Optional[Grid2] = None, dt: Optional[float] = None) -> GroupoidElement:
    """
    Integrate ``d/dt phi = v(t, phi)`` over unit time to a groupoid arrow.

    Raises:
        NumericalError: CFL violation or a folding step on either side
    """
    if not velocities:
        return FlowIntegrator(gamma0, grid).element()
    grid = grid if grid is not None else velocities[0].grid
    dt = 1.0 / len(velocities) if dt is None else dt
    flow = FlowIntegrator(gamma0, grid)
    for v in velocities:
        flow.step(v, dt)
    return flow.element()


# ---------------------------------------------------------------------------
# shooting
# ---------------------------------------------------------------------------

def _advance(mt: OneFormDensity, rate: PiecewiseCovector, dt: float,
             gamma: Optional[Interface]) -> OneFormDensity:
    moved = mt.axpy(dt, OneFormDensity(rate))
    return OneFormDensity(reextend(moved.m, gamma))


def shoot(m0: OneFormDensity, gamma0: Optional[Interface], steps: int, inertia: InertiaOperator,
          form: str = "euler_arnold") -> MomentumTrajectory:
    """
    Integrate the momentum and interface over unit time with the RK2 midpoint rule.

    Args:
        m0: Initial momentum
        gamma0: Initial interface (``None`` for smooth mode)
        steps: Number of time steps
        inertia: Inertia operator mapping momenta to velocities
        form: ``euler_arnold`` (half-weighted) or ``epdiff`` (full coefficients)

    Returns:
        MomentumTrajectory with steps + 1 entries
    """
    if steps < 1:
        raise ConfigError(f"steps must be >= 1, got {steps}")
    dt = 1.0 / steps
    grid = m0.grid
    m = OneFormDensity(reextend(m0.m, gamma0))
    gamma = gamma0
    v = invert_inertia(inertia, m)
    traj = MomentumTrajectory(times=np.array([0.0]), momenta=[m], interfaces=[gamma], velocities=[v])
    for k in range(steps):
        check_cfl(v, dt, grid)
        k1, _ = euler_arnold_rhs(m, v, gamma, form)
        gamma_half = advect_interface(gamma, v, 0.5 * dt) if gamma is not None else None
        m_half = _advance(m, k1, 0.5 * dt, gamma_half)
        v_half = invert_inertia(inertia, m_half)
        check_cfl(v_half, dt, grid)
        k2, _ = euler_arnold_rhs(m_half, v_half, gamma_half, form)
        gamma_next = advect_interface(gamma, v_half, dt) if gamma is not None else None
        m = _advance(m, reextend(k2, gamma), dt, gamma_next)
        gamma = gamma_next
        v = invert_inertia(inertia, m)
        traj.append((k + 1) * dt, m, gamma, v)
        logger.debug(f"Shoot step {k + 1}/{steps}: max|v| = {v.max_norm():.4f}")
    return traj


def trajectory_diagnostics(traj: MomentumTrajectory, inertia: InertiaOperator) -> List[dict]:
    """Per-time rows: H, max|v|, interface length and min per-side Jacobian of the flow so far."""
    grid = traj.momenta[0].grid
    flow = FlowIntegrator(traj.interfaces[0], grid)
    dt = 1.0 / traj.steps if traj.steps else 1.0
    rows = []
    for k, t in enumerate(traj.times):
        if k > 0:
            flow.step(traj.velocities[k - 1], dt)
        gamma = traj.interfaces[k]
        rows.append({
            "time": float(t),
            "hamiltonian": hamiltonian(traj.momenta[k], inertia),
            "max_speed": traj.velocities[k].max_norm(),
            "interface_length": gamma.length if gamma is not None else 0.0,
            "min_jacobian": flow.min_jacobian(),
        })
    return rows


# ---------------------------------------------------------------------------
# Poisson structure
# ---------------------------------------------------------------------------

def _contraction(m: PiecewiseVector, v: PiecewiseVector) -> PiecewiseScalar:
    """``i_v m`` per side."""
    grid = m.grid
    plus = ScalarField(grid, m.plus_part.dot(v.plus_part))
    if m.interface is None:
        return PiecewiseScalar(None, plus, plus)
    return PiecewiseScalar(m.interface, plus, ScalarField(grid, m.minus_part.dot(v.minus_part)))


def _boundary_covector(e: CotangentDualElement, interface: Interface) -> BoundaryFunction:
    return e.n if e.n is not None else BoundaryFunction.zeros(interface)


def poisson_bracket_jump_form(mt: OneFormDensity, e1: CotangentDualElement, e2: CotangentDualElement) -> float:
    """``int m([v1, v2]^R) mu + int_G (n2 - jump(i_v2 m)) i_v1 mu - int_G (n1 - jump(i_v1 m)) i_v2 mu``."""
    value = pairing(mt, reg_bracket(e1.v, e2.v))
    interface = mt.interface
    if interface is None:
        return value
    f1 = jump(_contraction(mt.m, e1.v))
    f2 = jump(_contraction(mt.m, e2.v))
    n1 = _boundary_covector(e1, interface)
    n2 = _boundary_covector(e2, interface)
    return value + boundary_integral(n2 - f2, e1.v) - boundary_integral(n1 - f1, e2.v)


def poisson_bracket_div_form(mt: OneFormDensity, e1: CotangentDualElement, e2: CotangentDualElement) -> float:
    """``-int d^R m(v1, v2) - int_G n1 i_v2 + int_G n2 i_v1 - int div^R(v1) i_v2 m + int div^R(v2) i_v1 m``."""
    grid = mt.grid
    interface = mt.interface
    v1, v2 = e1.v, e2.v
    sides = _sides(interface)
    plus_mask = np.ones(grid.shape, dtype=bool) if interface is None else interface.plus_mask
    density = np.zeros(grid.shape)
    for side in sides:
        m = mt.m.part(side)
        a, b = v1.part(side), v2.part(side)
        curl = curl2_array(m.vx, m.vy, grid)
        cross = a.vx * b.vy - a.vy * b.vx
        div_a = divergence_array(a.vx, a.vy, grid)
        div_b = divergence_array(b.vx, b.vy, grid)
        local = -curl * cross - div_a * m.dot(b) + div_b * m.dot(a)
        mask = plus_mask if side == "plus" else ~plus_mask
        density = np.where(mask, local, density)
    value = integrate(density, grid)
    if interface is None:
        return value
    n1 = _boundary_covector(e1, interface)
    n2 = _boundary_covector(e2, interface)
    return value - boundary_integral(n1, v2) + boundary_integral(n2, v1)


def hamiltonian_operator(mt: OneFormDensity, e: CotangentDualElement) -> Tuple[OneFormDensity, Optional[BoundaryFunction]]:
    """
    Hamiltonian vector field of the linear function ``e`` at ``mt``.

    Momentum part ``(-i_v d^R m - div^R(v) m - d^R i_v m) (x) mu + #*(jump(i_v m) - n)``;
    interface part ``#v``.
    """
    interface = mt.interface
    v = e.v
    plus = _cartan_rate(mt.m.plus_part, v.plus_part, 1.0)
    if interface is None:
        return OneFormDensity(PiecewiseCovector(None, plus, plus)), None
    minus = _cartan_rate(mt.m.minus_part, v.minus_part, 1.0)
    source = jump(_contraction(mt.m, v)) - _boundary_covector(e, interface)
    spike = dual_anchor(source).m
    rate = PiecewiseCovector(interface, plus + spike.plus_part, minus + spike.minus_part)
    return OneFormDensity(rate), anchor(v, interface)


def cotangent_pairing(e: CotangentDualElement, rate: Tuple[OneFormDensity, Optional[BoundaryFunction]]) -> float:
    """``<(v, n), (m_rate, gamma_rate)> = <m_rate, v> + <n, gamma_rate>``."""
    m_rate, gamma_rate = rate
    value = pairing(m_rate, e.v)
    if gamma_rate is not None and e.n is not None:
        value += boundary_pairing(e.n, gamma_rate)
    return value
