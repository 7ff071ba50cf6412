"""Tests for in-process operation timing."""

import pytest

from utils.performance_metrics import (clear_metrics, get_metrics, get_performance_summary, record_metric,
                                       summarize_metric, timed)


@pytest.fixture(autouse=True)
def fresh_store():
    clear_metrics()
    yield
    clear_metrics()


def test_summary_of_recorded_values():
    for value in (0.1, 0.2, 0.3):
        record_metric("register", value, {"n": 64})
    summary = summarize_metric("register")
    assert summary["count"] == 3
    assert summary["min"] == 0.1
    assert summary["max"] == 0.3
    assert summary["avg"] == pytest.approx(0.2)


def test_empty_summary():
    assert summarize_metric("missing")["count"] == 0


def test_timed_block_records_even_on_error():
    with pytest.raises(RuntimeError):
        with timed("check_suite", {"suite": "groupoid"}):
            raise RuntimeError("boom")
    rows = get_metrics("check_suite")
    assert len(rows) == 1
    assert rows[0]["context"] == {"suite": "groupoid"}
    assert rows[0]["duration_seconds"] >= 0.0


def test_history_is_bounded():
    for _ in range(600):
        record_metric("step", 0.001)
    assert len(get_metrics()) == 500


def test_performance_summary_groups_by_name():
    record_metric("a", 1.0)
    record_metric("b", 2.0)
    assert sorted(get_performance_summary()) == ["a", "b"]
