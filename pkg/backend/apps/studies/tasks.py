"""
Celery tasks for the parameter sweeps.

Payloads are the validated run configuration (a plain dict) plus one
parameter value; every task rebuilds its own problem so rows do not depend
on the order in which workers pick them up.
"""
from typing import Any, Dict

import structlog
from celery import shared_task

from .config import build_problem, parse_run_config
from .rows import bifurcation_row, semitrivial_row

logger = structlog.get_logger(__name__)


@shared_task(bind=True)
def semitrivial_table_row(self, source: Dict[str, Any], species: str, param: float) -> Dict[str, Any]:
    logger.info("semitrivial_row_started", task_id=self.request.id, species=species, param=param)
    run = parse_run_config(source)
    problem, _ = build_problem(run)
    row = semitrivial_row(problem, species, param, run.seed)
    logger.info("semitrivial_row_completed", task_id=self.request.id, species=species, param=param,
                status=row['status'])
    return row


@shared_task(bind=True)
def bifurcation_point(self, source: Dict[str, Any], which: str, value: float) -> Dict[str, Any]:
    logger.info("bifurcation_point_started", task_id=self.request.id, which=which, input=value)
    run = parse_run_config(source)
    problem, _ = build_problem(run)
    row = bifurcation_row(problem, run, which, value)
    logger.info("bifurcation_point_completed", task_id=self.request.id, which=which, input=value,
                status=row['status'])
    return row
