"""
Registration energy, its adjoint gradient and the relaxation optimizer.

The optimizer works on per-step momenta ``m_t`` with velocities
``v_t = invert_inertia(m_t)``, so every iterate is admissible and no
inertia solve is needed. Velocities live on the masks of the source
interface; the flow still transports the interface and the final interface
decides which side's map warps each node.
"""

import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from analyzers.similarity import similarity, similarity_gradient
from config import OptimizerConfig
from engines.algebroid_engine import apply_inertia, invert_inertia, metric, pairing
from engines.grid_engine import bilinear, bilinear_adjoint, bilinear_with_gradient, integrate, locate
from engines.groupoid_engine import act_on_image, side_masks
from engines.interface_engine import (build_interface, extend_array_transpose, masks, normal_jump,
                                      piecewise_from_composite, reextend)
from engines.mechanics_engine import FlowIntegrator
from models.algebroid_models import DVectField, OneFormDensity
from models.field_models import ScalarField, VectorField, make_grid
from models.interface_models import PiecewiseCovector, PiecewiseVector
from models.registration_models import EnergyTerms, RegistrationProblem, RegistrationResult
from utils.errors import GRegError, InterfaceError, NumericalError, SolverError
from utils.performance_metrics import timed

logger = logging.getLogger(__name__)

SideArrays = Dict[str, Tuple[np.ndarray, np.ndarray]]

# a small decrease from a step below this fraction of the largest accepted one is a stall
STALLED_STEP_FRACTION = 1e-3


def _sides(problem: RegistrationProblem) -> Tuple[str, ...]:
    return ("plus",) if problem.interface is None else ("plus", "minus")


def _check_series(v_series: Sequence, problem: RegistrationProblem) -> None:
    if len(v_series) != problem.steps:
        raise ValueError(f"expected {problem.steps} velocities, got {len(v_series)}")


def _run_flow(v_series: Sequence[PiecewiseVector], problem: RegistrationProblem,
              keep_history: bool = False) -> FlowIntegrator:
    flow = FlowIntegrator(problem.interface, problem.grid, keep_history=keep_history)
    for v in v_series:
        flow.step(v, problem.dt)
    return flow


def _regularizer(v_series: Sequence[PiecewiseVector], problem: RegistrationProblem,
                 momenta: Optional[Sequence[OneFormDensity]]) -> float:
    dt = problem.dt
    if momenta is None:
        return sum(0.5 * dt * metric(v, v, problem.inertia) for v in v_series)
    return sum(0.5 * dt * pairing(m, v) for m, v in zip(momenta, v_series))


def energy(v_series: Sequence[PiecewiseVector], problem: RegistrationProblem,
           momenta: Optional[Sequence[OneFormDensity]] = None) -> EnergyTerms:
    """
    Registration energy ``E_S(phi . I_m, I_f) + reg_weight * 1/2 sum_t dt |v_t|^2``.

    Args:
        v_series: One velocity per time step
        problem: Images, interface and energy settings
        momenta: Momenta the velocities were computed from; when given the
            kinetic term is ``<m_t, v_t>`` and no inertia solve is needed

    Returns:
        EnergyTerms(total, similarity, regularizer)

    Raises:
        NumericalError: CFL violation or a folding step
    """
    _check_series(v_series, problem)
    flow = _run_flow(v_series, problem)
    warped = act_on_image(flow.element(), problem.moving)
    sim = similarity(problem.sim_kind, warped, problem.fixed, problem.lncc_window)
    reg = _regularizer(v_series, problem, momenta)
    return EnergyTerms(sim + problem.reg_weight * reg, sim, reg)


def _similarity_adjoint(flow: FlowIntegrator, problem: RegistrationProblem) -> Tuple[float, ScalarField, List[SideArrays]]:
    """
    Similarity value, warped image and raw derivatives with respect to every step's velocity parts.

    The inverse displacement obeys ``u_{t+1} = u_t(x - dt v_t) - dt v_t``;
    its adjoint is transported back with the transpose of the same
    bilinear interpolation.
    """
    grid = problem.grid
    X, Y = grid.coordinates
    dt = problem.dt
    warped = act_on_image(flow.element(), problem.moving)
    value, residual = similarity_gradient(problem.sim_kind, warped, problem.fixed, problem.lncc_window)
    final_masks = side_masks(flow.gamma, grid)

    adjoint: SideArrays = {}
    for side in flow.sides:
        ux, uy = flow.inverse_displacement[side]
        _, gx, gy = bilinear_with_gradient(problem.moving.values, grid, X + ux, Y + uy)
        weight = residual * final_masks[side]
        adjoint[side] = (weight * gx, weight * gy)

    grads: List[SideArrays] = [{} for _ in flow.history]
    for t in reversed(range(len(flow.history))):
        record = flow.history[t]
        for side in flow.sides:
            v = record.velocity.part(side)
            ux, uy = record.inverse_displacement[side]
            s = locate(grid, X - dt * v.vx, Y - dt * v.vy)
            _, uxx, uxy = bilinear_with_gradient(ux, grid, None, None, s)
            _, uyx, uyy = bilinear_with_gradient(uy, grid, None, None, s)
            ax, ay = adjoint[side]
            grads[t][side] = (-dt * (ax + ax * uxx + ay * uyx), -dt * (ay + ax * uxy + ay * uyy))
            adjoint[side] = (bilinear_adjoint(ax, grid, None, None, s), bilinear_adjoint(ay, grid, None, None, s))
    return value, warped, grads


def _as_covector(raw: SideArrays, problem: RegistrationProblem) -> PiecewiseCovector:
    grid = problem.grid
    w = grid.quadrature_weights
    gx, gy = raw["plus"]
    plus = VectorField(grid, gx / w, gy / w)
    if problem.interface is None:
        return PiecewiseCovector(None, plus, plus)
    gx, gy = raw["minus"]
    return PiecewiseCovector(problem.interface, plus, VectorField(grid, gx / w, gy / w))


def _side_restricted(mt: OneFormDensity, scale: float, problem: RegistrationProblem) -> PiecewiseCovector:
    """``scale * chi_s * m_s`` per side."""
    grid = problem.grid
    region = masks(problem.interface, grid)
    parts = []
    for side in ("plus", "minus"):
        chi = region.side(side) if problem.interface is not None else np.ones(grid.shape, dtype=bool)
        m = mt.m.part(side)
        parts.append(VectorField(grid, scale * m.vx * chi, scale * m.vy * chi))
    return PiecewiseCovector(problem.interface, parts[0], parts[1] if problem.interface is not None else parts[0])


@dataclass
class EnergyGradient:
    """
    Gradient of the discrete energy with respect to each step's velocity parts.

    Covectors are raw derivatives divided by the quadrature weights, so the
    directional derivative along ``d`` is ``sum_t sum_side integrate(g . d)``
    over the full grid of each part.
    """
    terms: EnergyTerms
    similarity: List[PiecewiseCovector]
    regularizer: List[PiecewiseCovector]

    def covectors(self) -> List[PiecewiseCovector]:
        return [s + r for s, r in zip(self.similarity, self.regularizer)]

    def directional(self, direction: Sequence[PiecewiseVector]) -> float:
        total = 0.0
        for g, d in zip(self.covectors(), direction):
            sides = ("plus",) if g.interface is None else ("plus", "minus")
            for side in sides:
                total += integrate(g.part(side).dot(d.part(side)), g.grid)
        return total

    def descent_covectors(self) -> List[OneFormDensity]:
        """Fold extension-node contributions onto the side nodes they copy from."""
        folded = []
        for g in self.covectors():
            interface = g.interface
            if interface is None:
                folded.append(OneFormDensity(g))
                continue
            grid = g.grid
            w = grid.quadrature_weights
            region = masks(interface)
            cx = np.zeros(grid.shape)
            cy = np.zeros(grid.shape)
            for side in ("plus", "minus"):
                part = g.part(side)
                cx += extend_array_transpose(w * part.vx, region, side)
                cy += extend_array_transpose(w * part.vy, region, side)
            composite = VectorField(grid, cx / w, cy / w)
            folded.append(OneFormDensity(piecewise_from_composite(composite, interface, PiecewiseCovector)))
        return folded

    def velocities(self, inertia) -> List[DVectField]:
        """Inertia-preconditioned, projected velocity-space gradient."""
        return [invert_inertia(inertia, c) for c in self.descent_covectors()]


def energy_gradient(v_series: Sequence[PiecewiseVector], problem: RegistrationProblem,
                    momenta: Optional[Sequence[OneFormDensity]] = None) -> EnergyGradient:
    """
    Discretize-then-differentiate gradient of ``energy``.

    The regularizer contributes ``reg_weight * dt * I v_t`` per side; with
    ``momenta`` given, ``I v_t`` is taken to be ``m_t``.
    """
    _check_series(v_series, problem)
    with timed("energy_gradient", {"steps": problem.steps}):
        flow = _run_flow(v_series, problem, keep_history=True)
        sim, _, raw = _similarity_adjoint(flow, problem)
        reg = _regularizer(v_series, problem, momenta)
        scale = problem.reg_weight * problem.dt
        if momenta is None:
            momenta = [apply_inertia(problem.inertia, v) for v in v_series]
        reg_covectors = [_side_restricted(m, scale, problem) for m in momenta]
    return EnergyGradient(
        terms=EnergyTerms(sim + problem.reg_weight * reg, sim, reg),
        similarity=[_as_covector(r, problem) for r in raw],
        regularizer=reg_covectors,
    )


# ---------------------------------------------------------------------------
# relaxation optimizer
# ---------------------------------------------------------------------------

@dataclass
class _State:
    momenta: List[OneFormDensity]
    velocities: List[DVectField]
    flow: FlowIntegrator
    terms: EnergyTerms


def _evaluate(problem: RegistrationProblem, momenta: List[OneFormDensity],
              velocities: Optional[List[DVectField]] = None) -> _State:
    if velocities is None:
        velocities = [invert_inertia(problem.inertia, m) for m in momenta]
    flow = _run_flow(velocities, problem, keep_history=True)
    warped = act_on_image(flow.element(), problem.moving)
    sim = similarity(problem.sim_kind, warped, problem.fixed, problem.lncc_window)
    reg = _regularizer(velocities, problem, momenta)
    return _State(momenta, velocities, flow, EnergyTerms(sim + problem.reg_weight * reg, sim, reg))


def _raw_dot(raw: SideArrays, v: PiecewiseVector) -> float:
    total = 0.0
    for side, (gx, gy) in raw.items():
        part = v.part(side)
        total += float(np.sum(gx * part.vx) + np.sum(gy * part.vy))
    return total


def _fiber_residual(velocities: Sequence[PiecewiseVector]) -> float:
    worst = 0.0
    for v in velocities:
        if v.interface is not None:
            worst = max(worst, float(np.max(np.abs(normal_jump(v).values))))
    return worst


def _descent(problem: RegistrationProblem, state: _State):
    """Descent momenta, matching velocities and the exact slope of the energy along them."""
    _, _, raw = _similarity_adjoint(state.flow, problem)
    scale = problem.reg_weight * problem.dt
    sim_cov = [_as_covector(r, problem) for r in raw]
    reg_cov = [_side_restricted(m, scale, problem) for m in state.momenta]
    grad = EnergyGradient(state.terms, sim_cov, reg_cov)
    d_momenta = [c.scaled(-1.0) for c in grad.descent_covectors()]
    d_velocities = [invert_inertia(problem.inertia, dm) for dm in d_momenta]
    slope = 0.0
    for r, m, v, dm, dv in zip(raw, state.momenta, state.velocities, d_momenta, d_velocities):
        slope += _raw_dot(r, dv) + 0.5 * scale * (pairing(dm, v) + pairing(m, dv))
    return d_momenta, d_velocities, slope


def _trial(problem: RegistrationProblem, state: _State, d_momenta, d_velocities, alpha: float) -> Optional[_State]:
    momenta = [m.axpy(alpha, dm) for m, dm in zip(state.momenta, d_momenta)]
    velocities = [DVectField(v.interface, v.plus_part + dv.plus_part * alpha, v.minus_part + dv.minus_part * alpha)
                  for v, dv in zip(state.velocities, d_velocities)]
    try:
        return _evaluate(problem, momenta, velocities)
    except (NumericalError, InterfaceError, SolverError) as e:
        logger.debug(f"Trial step {alpha:.3e} rejected: {e}")
        return None


def _relax(problem: RegistrationProblem, opt: OptimizerConfig,
           momenta: List[OneFormDensity]) -> RegistrationResult:
    state = _evaluate(problem, momenta)
    trace = [state.terms]
    residuals = [_fiber_residual(state.velocities)]
    step = opt.step_size
    largest_step = 0.0
    converged = False
    iterations = 0
    for iterations in range(1, opt.iters + 1):
        d_momenta, d_velocities, slope = _descent(problem, state)
        if slope >= 0.0:
            logger.info(f"Iteration {iterations}: stationary (slope {slope:.3e})")
            converged = True
            iterations -= 1
            break
        accepted = None
        alpha = step
        for _ in range(opt.max_halvings + 1):
            trial = _trial(problem, state, d_momenta, d_velocities, alpha)
            if trial is not None and (not opt.line_search
                                      or trial.terms.total <= state.terms.total + opt.armijo_c * alpha * slope):
                accepted = trial
                break
            if not opt.line_search and trial is None:
                break
            alpha *= 0.5
        if accepted is None:
            logger.warning(f"Line search failed at iteration {iterations} after {opt.max_halvings} halvings")
            iterations -= 1
            break
        previous = state.terms.total
        state = accepted
        trace.append(state.terms)
        residuals.append(_fiber_residual(state.velocities))
        step = 2.0 * alpha
        largest_step = max(largest_step, alpha)
        decrease = (previous - state.terms.total) / max(abs(previous), 1e-12)
        logger.info(f"Iteration {iterations}: E = {state.terms.total:.6e} "
                    f"(sim {state.terms.similarity:.4e}, reg {state.terms.regularizer:.4e}), step {alpha:.3e}")
        if decrease < opt.tol:
            converged = alpha >= STALLED_STEP_FRACTION * largest_step
            if not converged:
                logger.warning(f"Optimizer stalled at iteration {iterations}: step {alpha:.3e}, "
                               f"relative decrease {decrease:.3e}")
            break

    element = state.flow.element()
    return RegistrationResult(
        element=element,
        warped=act_on_image(element, problem.moving),
        velocities=list(state.velocities),
        energy_trace=trace,
        converged=converged,
        momenta=list(state.momenta),
        iterations=iterations,
        fiber_residuals=residuals,
    )


# ---------------------------------------------------------------------------
# multi-resolution
# ---------------------------------------------------------------------------

def _coarsen(problem: RegistrationProblem) -> RegistrationProblem:
    grid = problem.grid
    coarse = make_grid(max(grid.nx // 2, 4), max(grid.ny // 2, 4), grid.extent, grid.origin)
    X, Y = coarse.coordinates

    def resample(f: ScalarField) -> ScalarField:
        return ScalarField(coarse, bilinear(f.values, grid, X, Y))

    interface = None if problem.interface is None else build_interface(resample(problem.interface.sdf))
    return replace(problem, moving=resample(problem.moving), fixed=resample(problem.fixed),
                   interface=interface, lncc_window=max(problem.lncc_window / 2.0, 2.0))


def _prolong(momenta: Sequence[OneFormDensity], problem: RegistrationProblem) -> List[OneFormDensity]:
    grid = problem.grid
    X, Y = grid.coordinates
    fine = []
    for mt in momenta:
        coarse = mt.grid
        parts = [VectorField(grid, bilinear(mt.m.part(side).vx, coarse, X, Y), bilinear(mt.m.part(side).vy, coarse, X, Y))
                 for side in ("plus", "minus")]
        cov = PiecewiseCovector(problem.interface, parts[0], parts[1] if problem.interface is not None else parts[0])
        fine.append(OneFormDensity(reextend(cov, problem.interface)))
    return fine


def _zero_momenta(problem: RegistrationProblem) -> List[OneFormDensity]:
    return [OneFormDensity.zeros(problem.grid, problem.interface) for _ in range(problem.steps)]


def register(problem: RegistrationProblem, opt: Optional[OptimizerConfig] = None) -> RegistrationResult:
    """
    Minimize the registration energy by preconditioned gradient descent over time-discretized momenta.

    Args:
        problem: Registration problem; ``interface=None`` runs smooth LDDMM
        opt: Optimizer settings

    Returns:
        RegistrationResult with the final arrow, warped image and energy trace
    """
    opt = opt or OptimizerConfig()
    mode = "LDDMM" if problem.interface is None else "groupoid"
    logger.info(f"Registering ({mode}) on {problem.grid.nx}x{problem.grid.ny}, "
                f"{problem.steps} steps, sim={problem.sim_kind}")
    with timed("register", {"mode": mode}):
        momenta = _zero_momenta(problem)
        if opt.multires and min(problem.grid.nx, problem.grid.ny) >= 16:
            coarse_problem = _coarsen(problem)
            coarse = _relax(coarse_problem, opt, _zero_momenta(coarse_problem))
            logger.info(f"Coarse level finished after {coarse.iterations} iterations")
            momenta = _prolong(coarse.momenta, problem)
        try:
            result = _relax(problem, opt, momenta)
        except GRegError as e:
            logger.error(f"Registration failed: {e}")
            raise
    logger.info(f"Registration ({mode}) finished: {result.iterations} iterations, "
                f"E = {result.energy_trace[-1].total:.6e}, converged={result.converged}")
    return result


def register_lddmm(problem: RegistrationProblem, opt: Optional[OptimizerConfig] = None) -> RegistrationResult:
    """Smooth LDDMM baseline: ``register`` with the interface removed."""
    if problem.interface is not None:
        problem = replace(problem, interface=None)
    return register(problem, opt)
