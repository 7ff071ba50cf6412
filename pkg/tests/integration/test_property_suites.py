"""Invariant suites run at their full resolutions."""

import pytest

from analyzers.property_suite import (bracket_suite, duality_suite, gradient_suite, groupoid_suite,
                                      hamiltonian_suite, jump_lemma_suite, run_suites)

pytestmark = pytest.mark.integration


def test_jump_lemma_converges():
    result = jump_lemma_suite()
    assert result.passed, result.summary()
    assert result.measured["relative_error_finest"] <= 0.01


@pytest.mark.slow
def test_bracket_forms_agree():
    result = bracket_suite(seed=0)
    assert result.passed, result.summary()


def test_hamiltonian_operator_duality():
    result = duality_suite(seed=0)
    assert result.passed, result.summary()


def test_groupoid_axioms():
    result = groupoid_suite(seed=0)
    assert result.passed, result.summary()


def test_gradient_finite_differences():
    result = gradient_suite(seed=0)
    assert result.passed, result.summary()
    assert set(result.measured) == {"smooth_ssd", "smooth_lncc", "sliding_ssd", "sliding_lncc",
                                    "smooth_ssd_gaussian", "sliding_ssd_gaussian"}


@pytest.mark.slow
def test_hamiltonian_is_conserved():
    result = hamiltonian_suite()
    assert result.passed, result.summary()
    assert result.measured["smooth"] <= 0.01
    assert result.measured["sliding"] <= 0.05


def test_selection_runs_in_order():
    results = run_suites("groupoid,jump_lemma", seed=0)
    assert [r.name for r in results] == ["groupoid_axioms", "jump_lemma"]
