"""Lightweight in-process timing of engine operations."""

from __future__ import annotations

from contextlib import contextmanager
from statistics import mean
from threading import Lock
from typing import Dict, Iterator, List, Optional
import time

_METRICS: List[Dict] = []
_LOCK = Lock()
_MAX_ROWS = 500


def record_metric(metric_name: str, duration_seconds: float, context: Optional[Dict] = None) -> None:
    """Record a latency metric in the process-local store."""
    with _LOCK:
        _METRICS.append(
            {
                "metric": metric_name,
                "duration_seconds": round(float(duration_seconds), 6),
                "timestamp": time.time(),
                "context": context or {},
            }
        )

        # Keep history bounded.
        if len(_METRICS) > _MAX_ROWS:
            del _METRICS[: len(_METRICS) - _MAX_ROWS]


@contextmanager
def timed(metric_name: str, context: Optional[Dict] = None) -> Iterator[None]:
    """Time the enclosed block and record it under ``metric_name``."""
    start = time.perf_counter()
    try:
        yield
    finally:
        record_metric(metric_name, time.perf_counter() - start, context)


def get_metrics(metric_name: Optional[str] = None) -> List[Dict]:
    """Fetch all metrics or only those for a specific metric name."""
    with _LOCK:
        if not metric_name:
            return list(_METRICS)
        return [m for m in _METRICS if m.get("metric") == metric_name]


def clear_metrics() -> None:
    with _LOCK:
        _METRICS.clear()


def summarize_metric(metric_name: str) -> Dict[str, float]:
    """Return count/min/max/avg/p95 summary for a metric."""
    rows = get_metrics(metric_name)
    if not rows:
        return {"count": 0, "min": 0.0, "max": 0.0, "avg": 0.0, "p95": 0.0}

    values = sorted(float(item.get("duration_seconds", 0.0)) for item in rows)
    count = len(values)
    p95_index = min(count - 1, int(round(0.95 * (count - 1))))
    return {
        "count": count,
        "min": values[0],
        "max": values[-1],
        "avg": mean(values),
        "p95": values[p95_index],
    }


def get_performance_summary() -> Dict[str, Dict[str, float]]:
    """Summaries for every metric name seen so far."""
    names = sorted({row["metric"] for row in get_metrics()})
    return {name: summarize_metric(name) for name in names}
