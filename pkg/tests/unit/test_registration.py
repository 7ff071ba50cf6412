"""Unit tests for the registration energy, its adjoint gradient and the optimizer."""

from dataclasses import replace

import numpy as np
import pytest

import analyzers.registration as registration
from analyzers.property_suite import gradient_check, gradient_problem, smooth_series
from analyzers.registration import energy, energy_gradient, register, register_lddmm
from analyzers.similarity import ssd
from config import OptimizerConfig
from engines.groupoid_engine import min_side_jacobian
from engines.interface_engine import normal_jump
from models.interface_models import PiecewiseVector
from models.registration_models import EnergyTerms
from utils.errors import ConfigError, InterfaceError, SolverError


@pytest.fixture(scope="module")
def smooth_problem():
    return gradient_problem(with_interface=False)


@pytest.fixture(scope="module")
def sliding_problem():
    return gradient_problem(with_interface=True)


class TestProblem:
    """Validation of registration problem settings."""

    def test_rejects_zero_steps(self, smooth_problem):
        with pytest.raises(ConfigError, match="steps"):
            replace(smooth_problem, steps=0)

    def test_rejects_unknown_similarity(self, smooth_problem):
        with pytest.raises(ConfigError, match="similarity"):
            replace(smooth_problem, sim_kind="mutual_information")

    def test_rejects_tiny_window(self, smooth_problem):
        with pytest.raises(ConfigError, match="lncc_window"):
            replace(smooth_problem, lncc_window=1.0)

    def test_time_step(self, smooth_problem):
        assert smooth_problem.dt == pytest.approx(1.0 / 3.0)


class TestEnergy:
    """Energy evaluation on fixed velocity series."""

    def test_zero_velocities(self, smooth_problem):
        zero = [PiecewiseVector.zeros(smooth_problem.grid) for _ in range(smooth_problem.steps)]
        terms = energy(zero, smooth_problem)
        assert terms.regularizer == 0.0
        assert terms.similarity == pytest.approx(ssd(smooth_problem.moving, smooth_problem.fixed))
        assert terms.total == terms.similarity

    def test_wrong_series_length(self, smooth_problem):
        with pytest.raises(ValueError, match="expected 3 velocities"):
            energy([PiecewiseVector.zeros(smooth_problem.grid)], smooth_problem)

    def test_regularizer_scales_quadratically(self, sliding_problem, rng):
        series = smooth_series(sliding_problem.grid, sliding_problem.interface, sliding_problem.steps, rng)
        doubled = [v * 2.0 for v in series]
        assert energy(doubled, sliding_problem).regularizer == pytest.approx(
            4.0 * energy(series, sliding_problem).regularizer, rel=1e-10)

    def test_terms_match_gradient_evaluation(self, sliding_problem, rng):
        series = smooth_series(sliding_problem.grid, sliding_problem.interface, sliding_problem.steps, rng)
        assert energy_gradient(series, sliding_problem).terms.total == pytest.approx(
            energy(series, sliding_problem).total, rel=1e-12)


class TestGradient:
    """Adjoint gradient against central finite differences."""

    @pytest.mark.parametrize("with_interface", [False, True])
    @pytest.mark.parametrize("sim_kind", ["ssd", "lncc"])
    def test_matches_finite_differences(self, with_interface, sim_kind):
        assert gradient_check(gradient_problem(with_interface, sim_kind), seed=3) <= 1e-4

    @pytest.mark.parametrize("with_interface", [False, True])
    def test_gaussian_inertia_matches_finite_differences(self, with_interface):
        problem = gradient_problem(with_interface, inertia_kind="gaussian_kernel")
        assert problem.inertia.kind == "gaussian_kernel"
        assert gradient_check(problem, seed=3) <= 1e-4

    def test_descent_velocities_are_admissible(self, sliding_problem, rng):
        series = smooth_series(sliding_problem.grid, sliding_problem.interface, sliding_problem.steps, rng)
        velocities = energy_gradient(series, sliding_problem).velocities(sliding_problem.inertia)
        for v in velocities:
            assert np.max(np.abs(normal_jump(v).values)) <= 1e-6 * (1.0 + v.max_norm())


class TestOptimizer:
    """Relaxation optimizer with Armijo backtracking."""

    def test_no_iterations_returns_identity(self, smooth_problem):
        result = register(smooth_problem, OptimizerConfig(iters=0))
        assert result.iterations == 0
        assert len(result.energy_trace) == 1
        np.testing.assert_array_equal(result.warped.values, smooth_problem.moving.values)

    def test_energy_decreases_monotonically(self, smooth_problem):
        result = register(smooth_problem, OptimizerConfig(iters=5, tol=0.0))
        totals = [t.total for t in result.energy_trace]
        assert len(totals) >= 2
        assert all(b <= a for a, b in zip(totals, totals[1:]))
        assert totals[-1] < totals[0]

    def test_sliding_result_is_piecewise_diffeomorphic(self, sliding_problem):
        result = register(sliding_problem, OptimizerConfig(iters=4, tol=0.0))
        assert min_side_jacobian(result.element) > 0.0
        assert max(result.fiber_residuals) <= 1e-6
        assert not result.element.smooth

    def test_lddmm_drops_the_interface(self, sliding_problem):
        result = register_lddmm(sliding_problem, OptimizerConfig(iters=1))
        assert result.element.smooth
        assert all(v.interface is None for v in result.velocities)

    def test_multires_warm_start(self, smooth_problem):
        result = register(smooth_problem, OptimizerConfig(iters=3, tol=0.0, multires=True))
        assert result.energy_trace[-1].total <= result.energy_trace[0].total


def _scripted_trial(accept):
    """Trial stand-in whose energy drops by ``1e-3 * alpha`` relative, when ``accept(alpha)`` allows it."""
    calls = []

    def trial(problem, state, d_momenta, d_velocities, alpha):
        calls.append(alpha)
        if not accept(len(calls), alpha):
            return None
        total = state.terms.total * (1.0 - 1e-3 * alpha)
        return registration._State(state.momenta, state.velocities, state.flow, EnergyTerms(total, total, 0.0))

    return trial


class TestStopping:
    """Convergence flag and recovery from failed trial steps."""

    @pytest.fixture(autouse=True)
    def unit_slope(self, monkeypatch):
        monkeypatch.setattr(registration, "_descent", lambda problem, state: ([], [], -state.terms.total))

    def test_shrinking_steps_are_not_convergence(self, smooth_problem, monkeypatch):
        monkeypatch.setattr(registration, "_trial", _scripted_trial(lambda call, alpha: call == 1 or alpha <= 1e-5))
        result = register(smooth_problem, OptimizerConfig(iters=5, tol=1e-6))
        assert result.iterations == 2
        assert not result.converged

    def test_small_decrease_at_full_step_is_convergence(self, smooth_problem, monkeypatch):
        monkeypatch.setattr(registration, "_trial", _scripted_trial(lambda call, alpha: True))
        result = register(smooth_problem, OptimizerConfig(iters=5, tol=1e-2))
        assert result.iterations == 1
        assert result.converged


@pytest.mark.parametrize("error", [InterfaceError("band too thin"), SolverError("cg stalled", 1.0)])
def test_failed_trial_step_is_halved(smooth_problem, monkeypatch, error):
    evaluate = registration._evaluate
    failures = []

    def flaky(problem, momenta, velocities=None):
        if velocities is not None and not failures:
            failures.append(error)
            raise error
        return evaluate(problem, momenta, velocities)

    monkeypatch.setattr(registration, "_evaluate", flaky)
    result = register(smooth_problem, OptimizerConfig(iters=3, tol=0.0))
    assert failures
    assert result.iterations >= 1
    assert result.energy_trace[-1].total < result.energy_trace[0].total
