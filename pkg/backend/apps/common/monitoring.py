"""
agebif solver metrics.

Prometheus counters and histograms in a dedicated registry. Nothing is
served over HTTP; commands dump the registry with --metrics-file.
"""
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Union

import structlog
from prometheus_client import Counter, Histogram, write_to_textfile
from prometheus_client.core import CollectorRegistry

# Custom registry for metrics
registry = CollectorRegistry()

# ============================================================================
# Solver metrics
# ============================================================================

newton_iterations_total = Counter(
    'agebif_newton_iterations_total',
    'Newton iterations performed',
    ['solver'],
    registry=registry
)

solver_failures_total = Counter(
    'agebif_solver_failures_total',
    'Solver failures by error class',
    ['error'],
    registry=registry
)

continuation_steps_total = Counter(
    'agebif_continuation_steps_total',
    'Continuation steps by outcome',
    ['outcome'],
    registry=registry
)

study_duration_seconds = Histogram(
    'agebif_study_duration_seconds',
    'Wall time of a study command',
    ['study'],
    buckets=[0.1, 0.5, 1.0, 5.0, 15.0, 60.0, 300.0, 1800.0, float('inf')],
    registry=registry
)


class MetricsCollector:
    """Utility class for updating and exporting metrics"""

    @staticmethod
    def track_newton(solver: str, iterations: int):
        newton_iterations_total.labels(solver=solver).inc(iterations)

    @staticmethod
    def track_failure(error: Exception):
        solver_failures_total.labels(error=error.__class__.__name__).inc()

    @staticmethod
    def track_step(accepted: bool):
        continuation_steps_total.labels(outcome='accepted' if accepted else 'rejected').inc()

    @staticmethod
    @contextmanager
    def timed_study(study: str):
        start_time = time.perf_counter()
        try:
            yield
        finally:
            study_duration_seconds.labels(study=study).observe(time.perf_counter() - start_time)

    @staticmethod
    def export(path: Union[str, Path]) -> bool:
        """Write the registry in Prometheus text format"""
        try:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            write_to_textfile(str(path), registry)
            return True
        except OSError as e:
            structlog.get_logger(__name__).error("metrics_export_failed", path=str(path), error=str(e))
            return False
