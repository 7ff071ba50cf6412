"""Unit tests for the invariant-suite plumbing and its cheaper instances."""

import numpy as np
import pytest

import analyzers.property_suite as suites
from analyzers.property_suite import (SuiteResult, groupoid_suite, horizontal_interface, jump_lemma_terms,
                                      observed_order, run_suites, suite_names)
from utils.errors import ConfigError, NumericalError


def test_observed_order_of_second_order_data():
    hs = [0.1, 0.05, 0.025]
    assert observed_order(hs, [3.0 * h ** 2 for h in hs]) == pytest.approx(2.0)


def test_summary_line():
    result = SuiteResult("groupoid", True, {"inverse": 1e-3}, {"inverse": 5e-3})
    assert result.summary() == "[PASS] groupoid: inverse=0.001 (thresholds: inverse=0.005)"
    failed = SuiteResult("gradient_fd", False, error="boom")
    assert failed.summary().startswith("[FAIL] gradient_fd")
    assert failed.summary().endswith("error: boom")


def test_suite_selection():
    assert suite_names("all") == ["jump_lemma", "bracket", "duality", "groupoid", "gradient", "hamiltonian"]
    assert suite_names("groupoid, gradient") == ["groupoid", "gradient"]
    with pytest.raises(ConfigError, match="unknown suite"):
        suite_names("groupoid,fourier")
    with pytest.raises(ConfigError):
        suite_names(" , ")


def test_failing_suite_is_reported_not_raised(monkeypatch):
    def explode(seed):
        raise NumericalError("non-diffeomorphic step")

    monkeypatch.setitem(suites.SUITES, "groupoid", explode)
    [result] = run_suites("groupoid")
    assert not result.passed
    assert "non-diffeomorphic" in result.error


def test_straight_interface_midway_between_rows():
    interface = horizontal_interface(16)
    assert interface.samples.count == 15
    assert interface.length == pytest.approx(1.0)


def test_jump_lemma_terms_agree_at_moderate_resolution():
    boundary, volume = jump_lemma_terms(64)
    assert boundary == pytest.approx(volume, rel=0.05)


def test_small_groupoid_suite_passes():
    result = groupoid_suite(seed=1, n=32, arrows=3)
    assert result.passed, result.summary()


def test_shot_speed_stays_inside_the_stable_courant_range():
    courant = suites.SHOOT_SPEED * np.pi * (suites.SHOOT_N - 1) / suites.SHOOT_STEPS
    assert courant <= 0.5


def test_coarse_hamiltonian_suite_passes():
    result = suites.hamiltonian_suite(n=32, steps=10)
    assert result.passed, result.summary()
    assert result.error is None
