"""
Invariant suites run by ``check``.

Each suite builds seeded analytic instances, measures the quantities the
sliding-registration machinery promises and compares them with fixed
thresholds. Suites never raise on a failed property; they report it.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from analyzers.registration import energy, energy_gradient
from engines.grid_engine import gradient_array, integrate
from engines.groupoid_engine import (compose, identity_element, invert_position_map, inverse, map_distance,
                                     min_side_jacobian, side_landing_fraction)
from engines.interface_engine import boundary_integral, build_interface, jump, reg_div
from engines.mechanics_engine import (cotangent_pairing, hamiltonian, hamiltonian_operator,
                                      poisson_bracket_div_form, poisson_bracket_jump_form, shoot)
from engines.algebroid_engine import invert_inertia
from models.algebroid_models import InertiaOperator, OneFormDensity
from models.field_models import Grid2, ScalarField, VectorField, make_grid
from models.groupoid_models import CotangentDualElement, GroupoidElement
from models.interface_models import BoundaryFunction, Interface, PiecewiseScalar, PiecewiseVector
from models.registration_models import RegistrationProblem
from utils.errors import ConfigError, GRegError
from utils.performance_metrics import timed

logger = logging.getLogger(__name__)

REFINEMENT_LEVELS = (64, 128, 256)
MIN_ORDER = 0.9
JUMP_LEMMA_TOLERANCE = 0.01
ANTISYMMETRY_TOLERANCE = 1e-10
DUALITY_TOLERANCE = 0.03
DUALITY_N = 128
GROUPOID_N = 64
GROUPOID_ARROWS = 10
IDENTITY_TOLERANCE = 1e-10
INVERSE_TOLERANCE = 5e-3
LANDING_FRACTION = 0.99
GRADIENT_N = 16
GRADIENT_STEPS = 3
GRADIENT_TOLERANCE = 1e-4
GRADIENT_SIGMA = 0.1
FD_STEP = 1e-5
SHOOT_N = 64
SHOOT_STEPS = 20
# RK2 on centred differences amplifies grid-scale momentum once dt*speed*pi/h nears 1
SHOOT_SPEED = 0.05
SMOOTH_DRIFT = 0.01
SLIDING_DRIFT = 0.05
INSTANCES = 5


@dataclass
class SuiteResult:
    """Outcome of one invariant suite: pass flag plus measured values and the thresholds they met or missed."""
    name: str
    passed: bool
    measured: Dict[str, float] = field(default_factory=dict)
    thresholds: Dict[str, float] = field(default_factory=dict)
    error: Optional[str] = None

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        values = ", ".join(f"{k}={v:.4g}" for k, v in self.measured.items())
        limits = ", ".join(f"{k}={v:.4g}" for k, v in self.thresholds.items())
        line = f"[{status}] {self.name}: {values} (thresholds: {limits})"
        return line if self.error is None else f"{line} error: {self.error}"


# ---------------------------------------------------------------------------
# shared instance builders
# ---------------------------------------------------------------------------

def _envelope(grid: Grid2) -> np.ndarray:
    """``sin^2(pi x) sin^2(pi y)``: vanishes with its gradient on the outer boundary."""
    X, Y = grid.coordinates
    return np.sin(np.pi * X) ** 2 * np.sin(np.pi * Y) ** 2


def horizontal_interface(n: int) -> Interface:
    """Straight interface ``y = 0.5``; the upper half is D+."""
    grid = make_grid(n, n)
    _, Y = grid.coordinates
    return build_interface(ScalarField(grid, Y - 0.5))


def observed_order(spacings: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of ``log(error)`` against ``log(h)``."""
    errors = np.maximum(np.asarray(errors, dtype=float), 1e-300)
    slope, _ = np.polyfit(np.log(np.asarray(spacings, dtype=float)), np.log(errors), 1)
    return float(slope)


def _relative(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-12)


def _sliding_velocity(interface: Interface, coeffs: np.ndarray) -> PiecewiseVector:
    """
    Admissible two-sided velocity: the x-component differs per side, the
    y-component is one smooth expression shared by both sides.
    """
    grid = interface.grid
    X, Y = grid.coordinates
    env = _envelope(grid)
    a, b, c, d, e, f = coeffs
    vy = env * (d + e * X + f * Y)
    plus = VectorField(grid, env * (a + b * X), vy)
    minus = VectorField(grid, env * (c - b * Y), vy)
    return PiecewiseVector(interface, plus, minus)


def _affine_momentum(interface: Interface, coeffs: np.ndarray) -> OneFormDensity:
    grid = interface.grid
    X, Y = grid.coordinates
    c = coeffs.reshape(4, 3)
    parts = [VectorField(grid, c[k][0] + c[k][1] * X + c[k][2] * Y,
                         c[k + 1][0] + c[k + 1][1] * X + c[k + 1][2] * Y) for k in (0, 2)]
    return OneFormDensity.from_parts(interface, parts[0], parts[1])


def _boundary_values(interface: Interface, p: float, q: float) -> BoundaryFunction:
    x = interface.samples.points[:, 0]
    return BoundaryFunction(interface, p + q * np.cos(np.pi * x))


def _dual_elements(interface: Interface, rng: np.random.Generator):
    """Momentum and two cotangent elements, drawn in a grid-independent way."""
    mt = _affine_momentum(interface, rng.uniform(-1.0, 1.0, 12))
    elements = []
    for _ in range(2):
        v = _sliding_velocity(interface, rng.uniform(-1.0, 1.0, 6))
        p, q = rng.uniform(-1.0, 1.0, 2)
        elements.append(CotangentDualElement(v, _boundary_values(interface, p, q)))
    return mt, elements[0], elements[1]


# ---------------------------------------------------------------------------
# jump lemma
# ---------------------------------------------------------------------------

def jump_lemma_terms(n: int):
    """
    Both sides of the jump lemma for ``f = chi+ (x^2 + y) + chi- (x y)``.

    Returns:
        (boundary term, volume term)
    """
    interface = horizontal_interface(n)
    grid = interface.grid
    X, Y = grid.coordinates
    f = PiecewiseScalar(interface, ScalarField(grid, X ** 2 + Y), ScalarField(grid, X * Y))
    env = _envelope(grid)
    v = PiecewiseVector.smooth(VectorField(grid, env * (1.0 + X), env * (1.0 + Y ** 2)), interface)

    lhs = boundary_integral(jump(f), v)
    div = reg_div(v)
    density = np.zeros(grid.shape)
    for side, mask in (("plus", interface.plus_mask), ("minus", ~interface.plus_mask)):
        fs = f.plus_part if side == "plus" else f.minus_part
        gx, gy = gradient_array(fs.values, grid)
        vs = v.part(side)
        ds = div.plus_part if side == "plus" else div.minus_part
        density = np.where(mask, vs.vx * gx + vs.vy * gy + ds.values * fs.values, density)
    return lhs, integrate(density, grid)


def jump_lemma_suite(levels: Sequence[int] = REFINEMENT_LEVELS) -> SuiteResult:
    errors, spacings, relative = [], [], 0.0
    for n in levels:
        lhs, rhs = jump_lemma_terms(n)
        errors.append(abs(lhs - rhs))
        spacings.append(1.0 / (n - 1))
        relative = abs(lhs - rhs) / max(abs(lhs), 1e-12)
        logger.debug(f"Jump lemma at {n}^2: boundary {lhs:.6e}, volume {rhs:.6e}")
    order = observed_order(spacings, errors)
    return SuiteResult(
        name="jump_lemma",
        passed=order >= MIN_ORDER and relative <= JUMP_LEMMA_TOLERANCE,
        measured={"order": order, "relative_error_finest": relative},
        thresholds={"order": MIN_ORDER, "relative_error_finest": JUMP_LEMMA_TOLERANCE},
    )


# ---------------------------------------------------------------------------
# Poisson bracket forms and the Hamiltonian operator
# ---------------------------------------------------------------------------

def bracket_suite(seed: int = 0, levels: Sequence[int] = REFINEMENT_LEVELS,
                  instances: int = INSTANCES) -> SuiteResult:
    """Jump form against divergence form under refinement; antisymmetry of the jump form."""
    spacings = [1.0 / (n - 1) for n in levels]
    interfaces = {n: horizontal_interface(n) for n in levels}
    worst_order, worst_antisymmetry = np.inf, 0.0
    for k in range(instances):
        errors = []
        for n in levels:
            mt, e1, e2 = _dual_elements(interfaces[n], np.random.default_rng(seed + k))
            jump_form = poisson_bracket_jump_form(mt, e1, e2)
            errors.append(abs(jump_form - poisson_bracket_div_form(mt, e1, e2)))
            swapped = poisson_bracket_jump_form(mt, e2, e1)
            worst_antisymmetry = max(worst_antisymmetry, abs(jump_form + swapped) / (1.0 + abs(jump_form)))
        worst_order = min(worst_order, observed_order(spacings, errors))
    return SuiteResult(
        name="bracket_equivalence",
        passed=worst_order >= MIN_ORDER and worst_antisymmetry <= ANTISYMMETRY_TOLERANCE,
        measured={"min_order": worst_order, "antisymmetry": worst_antisymmetry},
        thresholds={"min_order": MIN_ORDER, "antisymmetry": ANTISYMMETRY_TOLERANCE},
    )


def duality_suite(seed: int = 0, n: int = DUALITY_N, instances: int = INSTANCES) -> SuiteResult:
    """``<e2, P#(e1)>`` against the bracket ``P(e1, e2)``."""
    interface = horizontal_interface(n)
    worst = 0.0
    for k in range(instances):
        mt, e1, e2 = _dual_elements(interface, np.random.default_rng(seed + k))
        paired = cotangent_pairing(e2, hamiltonian_operator(mt, e1))
        bracket = poisson_bracket_div_form(mt, e1, e2)
        worst = max(worst, _relative(paired, bracket))
        logger.debug(f"Duality instance {k}: pairing {paired:.6e}, bracket {bracket:.6e}")
    return SuiteResult(
        name="hamiltonian_duality",
        passed=worst <= DUALITY_TOLERANCE,
        measured={"max_relative_error": worst},
        thresholds={"max_relative_error": DUALITY_TOLERANCE},
    )


# ---------------------------------------------------------------------------
# groupoid axioms
# ---------------------------------------------------------------------------

def sliding_arrow(interface: Interface, rng: np.random.Generator, amplitude: float = 0.03) -> GroupoidElement:
    """
    Smooth two-sided arrow that keeps the straight interface ``y = 0.5`` in place.

    Each side shears along x and stretches along y about the interface; both
    maps are the identity on the outer boundary.
    """
    grid = interface.grid
    X, Y = grid.coordinates
    env = _envelope(grid)
    maps = []
    for _ in range(2):
        a, b = rng.uniform(-amplitude, amplitude, 2)
        maps.append(VectorField(grid, X + a * env, Y + b * env * (Y - 0.5)))
    inverses = [invert_position_map(m) for m in maps]
    return GroupoidElement(grid, interface, interface, maps[0], maps[1], inverses[0], inverses[1])


def groupoid_suite(seed: int = 0, n: int = GROUPOID_N, arrows: int = GROUPOID_ARROWS) -> SuiteResult:
    """Identity, associativity and inverse laws plus per-side diffeomorphism on seeded arrows."""
    interface = horizontal_interface(n)
    grid = interface.grid
    rng = np.random.default_rng(seed)
    elements = [sliding_arrow(interface, rng) for _ in range(arrows)]
    identity = identity_element(interface)
    h = grid.max_spacing
    diam = grid.diameter

    identity_error = assoc_error = inverse_error = 0.0
    min_jacobian, min_landing = np.inf, 1.0
    for k, g in enumerate(elements):
        identity_error = max(identity_error, map_distance(compose(identity, g), g), map_distance(compose(g, identity), g))
        g2, g3 = elements[(k + 1) % arrows], elements[(k + 2) % arrows]
        assoc_error = max(assoc_error, map_distance(compose(compose(g3, g2), g), compose(g3, compose(g2, g))))
        inverse_error = max(inverse_error, map_distance(compose(inverse(g), g), identity))
        min_jacobian = min(min_jacobian, min_side_jacobian(g))
        min_landing = min(min_landing, side_landing_fraction(g))

    thresholds = {
        "identity": IDENTITY_TOLERANCE * diam,
        "associativity": h * h,
        "inverse": INVERSE_TOLERANCE * diam,
        "min_jacobian": 0.0,
        "landing_fraction": LANDING_FRACTION,
    }
    measured = {
        "identity": identity_error,
        "associativity": assoc_error,
        "inverse": inverse_error,
        "min_jacobian": min_jacobian,
        "landing_fraction": min_landing,
    }
    passed = (identity_error <= thresholds["identity"] and assoc_error <= thresholds["associativity"]
              and inverse_error <= thresholds["inverse"] and min_jacobian > 0.0
              and min_landing >= LANDING_FRACTION)
    return SuiteResult("groupoid_axioms", passed, measured, thresholds)


# ---------------------------------------------------------------------------
# energy gradient against finite differences
# ---------------------------------------------------------------------------

def smooth_series(grid: Grid2, interface: Optional[Interface], steps: int, rng: np.random.Generator,
                  tangential: float = 0.05, normal: float = 0.01) -> List[PiecewiseVector]:
    """
    Random compactly supported velocities, mostly tangential to ``y = 0.5``.

    The small normal amplitude keeps the interface from crossing any node,
    so the side masks stay fixed.
    """
    X, Y = grid.coordinates
    env = _envelope(grid)
    series = []
    for _ in range(steps):
        parts = []
        for _ in range(2):
            a, b, c, d = rng.uniform(-1.0, 1.0, 4)
            parts.append(VectorField(grid, tangential * env * (a + b * np.cos(np.pi * X)),
                                     normal * env * (c + d * np.sin(np.pi * Y))))
        if interface is None:
            series.append(PiecewiseVector(None, parts[0], parts[0]))
        else:
            series.append(PiecewiseVector(interface, parts[0], parts[1]))
    return series


def _gradient_inertia(kind: str) -> InertiaOperator:
    if kind == "helmholtz":
        return InertiaOperator(kind="helmholtz", alpha=0.01, gamma=1.0, order=1)
    return InertiaOperator(kind=kind, sigma=GRADIENT_SIGMA)


def gradient_problem(with_interface: bool, sim_kind: str = "ssd", n: int = GRADIENT_N,
                     steps: int = GRADIENT_STEPS, inertia_kind: str = "helmholtz") -> RegistrationProblem:
    """
    Bump pair flat near the outer boundary.

    Helmholtz inertia needs no iterative solve; ``gaussian_kernel`` runs the
    spectral inverse in smooth mode and the per-side CG solve otherwise.
    """
    grid = make_grid(n, n)
    X, Y = grid.coordinates
    env = _envelope(grid)
    moving = env * np.exp(-((X - 0.45) ** 2 + (Y - 0.5) ** 2) / 0.02)
    fixed = env * np.exp(-((X - 0.55) ** 2 + (Y - 0.5) ** 2) / 0.02)
    interface = build_interface(ScalarField(grid, Y - 0.5)) if with_interface else None
    return RegistrationProblem(
        moving=ScalarField(grid, moving),
        fixed=ScalarField(grid, fixed),
        interface=interface,
        inertia=_gradient_inertia(inertia_kind),
        steps=steps,
        sim_kind=sim_kind,
        lncc_window=2.0,
        reg_weight=0.1,
    )


def gradient_check(problem: RegistrationProblem, seed: int = 0, delta: float = FD_STEP) -> float:
    """Relative gap between the analytic directional derivative and a central difference."""
    rng = np.random.default_rng(seed)
    v_series = smooth_series(problem.grid, problem.interface, problem.steps, rng)
    direction = smooth_series(problem.grid, problem.interface, problem.steps, rng)
    analytic = energy_gradient(v_series, problem).directional(direction)
    plus = [v.axpy(delta, d) for v, d in zip(v_series, direction)]
    minus = [v.axpy(-delta, d) for v, d in zip(v_series, direction)]
    numeric = (energy(plus, problem).total - energy(minus, problem).total) / (2.0 * delta)
    logger.debug(f"Gradient check: analytic {analytic:.8e}, finite difference {numeric:.8e}")
    return _relative(analytic, numeric)


def gradient_suite(seed: int = 0) -> SuiteResult:
    measured = {}
    for with_interface in (False, True):
        mode = "sliding" if with_interface else "smooth"
        for kind in ("ssd", "lncc"):
            measured[f"{mode}_{kind}"] = gradient_check(gradient_problem(with_interface, kind), seed)
        gaussian = gradient_problem(with_interface, inertia_kind="gaussian_kernel")
        measured[f"{mode}_ssd_gaussian"] = gradient_check(gaussian, seed)
    return SuiteResult(
        name="gradient_fd",
        passed=all(value <= GRADIENT_TOLERANCE for value in measured.values()),
        measured=measured,
        thresholds={label: GRADIENT_TOLERANCE for label in measured},
    )


# ---------------------------------------------------------------------------
# Hamiltonian conservation along shooting
# ---------------------------------------------------------------------------

def _bump(grid: Grid2, width: float = 0.1) -> np.ndarray:
    X, Y = grid.coordinates
    return np.exp(-((X - 0.5) ** 2 + (Y - 0.5) ** 2) / (2.0 * width ** 2))


def scaled_momentum(mt: OneFormDensity, inertia: InertiaOperator, speed: float) -> OneFormDensity:
    """Rescale ``mt`` so its velocity peaks at ``speed``."""
    peak = invert_inertia(inertia, mt).max_norm()
    return mt.scaled(speed / peak) if peak > 0 else mt


def hamiltonian_drift(m0: OneFormDensity, gamma: Optional[Interface], inertia: InertiaOperator,
                      steps: int = SHOOT_STEPS) -> float:
    """Largest relative change of ``H`` along a shot trajectory."""
    traj = shoot(m0, gamma, steps, inertia)
    energies = np.array([hamiltonian(m, inertia) for m in traj.momenta])
    return float(np.max(np.abs(energies - energies[0])) / energies[0])


def hamiltonian_suite(n: int = SHOOT_N, steps: int = SHOOT_STEPS, speed: float = SHOOT_SPEED) -> SuiteResult:
    """Relative Hamiltonian drift of a smooth and a sliding shot under the default Gaussian inertia."""
    inertia = InertiaOperator()
    grid = make_grid(n, n)
    bump = _bump(grid)
    smooth = OneFormDensity.from_parts(None, VectorField(grid, bump, 0.5 * bump))
    smooth_drift = hamiltonian_drift(scaled_momentum(smooth, inertia, speed), None, inertia, steps)

    interface = horizontal_interface(n)
    zero = np.zeros(grid.shape)
    sliding = OneFormDensity.from_parts(interface, VectorField(grid, bump, zero), VectorField(grid, -bump, zero))
    sliding_drift = hamiltonian_drift(scaled_momentum(sliding, inertia, speed), interface, inertia, steps)
    return SuiteResult(
        name="hamiltonian_drift",
        passed=smooth_drift <= SMOOTH_DRIFT and sliding_drift <= SLIDING_DRIFT,
        measured={"smooth": smooth_drift, "sliding": sliding_drift},
        thresholds={"smooth": SMOOTH_DRIFT, "sliding": SLIDING_DRIFT},
    )


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

SUITES: Dict[str, Callable[[int], SuiteResult]] = {
    "jump_lemma": lambda seed: jump_lemma_suite(),
    "bracket": lambda seed: bracket_suite(seed),
    "duality": lambda seed: duality_suite(seed),
    "groupoid": lambda seed: groupoid_suite(seed),
    "gradient": lambda seed: gradient_suite(seed),
    "hamiltonian": lambda seed: hamiltonian_suite(),
}


def suite_names(selection: str) -> List[str]:
    """Expand ``all`` or a comma-separated list into known suite names."""
    if selection == "all":
        return list(SUITES)
    names = [s.strip() for s in selection.split(",") if s.strip()]
    unknown = [s for s in names if s not in SUITES]
    if unknown or not names:
        raise ConfigError(f"unknown suite(s) {unknown or selection!r}; expected 'all' or any of {list(SUITES)}")
    return names


def run_suites(selection: str = "all", seed: int = 0) -> List[SuiteResult]:
    """
    Run the selected suites in order.

    A suite that raises one of the package's errors is reported as failed
    with the message attached.
    """
    results = []
    for name in suite_names(selection):
        with timed("check_suite", {"suite": name}):
            try:
                result = SUITES[name](seed)
            except GRegError as e:
                logger.error(f"Suite {name} failed: {e}")
                result = SuiteResult(name, False, error=str(e))
        logger.info(result.summary())
        results.append(result)
    return results
