"""
Run configuration: the JSON document every study command reads.

load_run_config() validates the document with RunConfigSerializer and
freezes it into the dataclasses the solver modules take.
"""
import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import structlog

from apps.branches.params import ModelParams
from apps.branches.points import BifurcationProblem
from apps.branches.shooting import ShootingConfig
from apps.common.exceptions import ConfigurationError
from apps.continuation.arclength import ContinuationConfig
from apps.evolve.steppers import StepperConfig
from apps.grid.meshes import BirthProfile
from apps.grid.operators import Discretization
from apps.spectral.radius import normalize_birth

from .serializers import RunConfigSerializer

logger = structlog.get_logger(__name__)


@dataclass(frozen=True)
class GridConfig:
    n_x: int = 64
    n_a: int = 128
    a_m: float = 1.0


@dataclass(frozen=True)
class BirthConfig:
    shape: str = 'constant'
    path: Optional[str] = None
    scale: float = 1.0


@dataclass(frozen=True)
class XiScanConfig:
    start: float = 1.1
    stop: float = 4.0
    num: int = 30

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.num)


@dataclass(frozen=True)
class RangesConfig:
    eta: Tuple[float, ...] = (1.2, 1.5, 2.0, 3.0)
    xi: Tuple[float, ...] = (1.5, 2.0, 3.0)
    eta_max: float = 1000.0
    xi_scan: XiScanConfig = field(default_factory=XiScanConfig)


@dataclass(frozen=True)
class StudyConfig:
    eta: float = 2.0
    xi: float = 2.0


@dataclass(frozen=True)
class SimulateConfig:
    t_end: float = 5.0
    init: str = 'coexistence'
    perturbation: float = 1.05
    sample_every: int = 1
    branch_steps: int = 20


@dataclass(frozen=True)
class RunConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    model: ModelParams = field(default_factory=ModelParams)
    birth: BirthConfig = field(default_factory=BirthConfig)
    shooting: ShootingConfig = field(default_factory=ShootingConfig)
    ranges: RangesConfig = field(default_factory=RangesConfig)
    study: StudyConfig = field(default_factory=StudyConfig)
    continuation: ContinuationConfig = field(default_factory=ContinuationConfig)
    simulate: SimulateConfig = field(default_factory=SimulateConfig)
    output_dir: Optional[str] = None
    seed: int = 0
    # validated document, kept so tasks can rebuild the config in a worker
    source: Dict[str, Any] = field(default_factory=dict, compare=False, repr=False)

    @property
    def stepper(self) -> StepperConfig:
        return self.shooting.stepper


def _flatten_errors(detail, prefix: str = '') -> Dict[str, Any]:
    if isinstance(detail, dict):
        flat = {}
        for key, value in detail.items():
            flat.update(_flatten_errors(value, f"{prefix}.{key}" if prefix else str(key)))
        return flat
    if isinstance(detail, list) and detail and all(isinstance(item, str) for item in detail):
        return {prefix or 'config': [str(item) for item in detail]}
    if isinstance(detail, list):
        flat = {}
        for idx, value in enumerate(detail):
            flat.update(_flatten_errors(value, f"{prefix}[{idx}]"))
        return flat
    return {prefix or 'config': [str(detail)]}


def parse_run_config(data: Any, base_dir: Optional[Union[str, Path]] = None) -> RunConfig:
    """
    Validate a decoded JSON document and build the RunConfig.

    Relative birth sample paths are resolved against base_dir.

    Raises:
        ConfigurationError: the document violates a bound or carries unknown keys
    """
    serializer = RunConfigSerializer(data=data)
    if not serializer.is_valid():
        errors = _flatten_errors(serializer.errors)
        summary = '; '.join(f"{key}: {' '.join(messages)}" for key, messages in sorted(errors.items()))
        raise ConfigurationError(f"invalid run configuration: {summary}", {'errors': errors})
    v = serializer.validated_data

    birth = dict(v['birth'])
    if birth.get('path'):
        path = Path(birth['path'])
        if not path.is_absolute() and base_dir is not None:
            path = Path(base_dir) / path
        birth['path'] = str(path.resolve())

    solver = v['solver']
    stepper = StepperConfig(tol=solver['step_tol'], max_iter=solver['step_max_iter'],
                            diffusion_floor=solver['diffusion_floor'])
    shooting = ShootingConfig(tol=solver['shooting_tol'], max_iter=solver['shooting_max_iter'],
                              power_tol=solver['power_tol'], power_max_iter=solver['power_max_iter'],
                              stepper=stepper)
    ranges = v['ranges']
    source = json.loads(json.dumps(v))
    source['birth'] = birth

    try:
        model = ModelParams(**v['model'])
        continuation = ContinuationConfig(**v['continuation'])
    except ValueError as exc:
        raise ConfigurationError(f"invalid run configuration: {exc}") from exc

    return RunConfig(
        grid=GridConfig(**v['grid']),
        model=model,
        birth=BirthConfig(**birth),
        shooting=shooting,
        ranges=RangesConfig(eta=tuple(ranges['eta']), xi=tuple(ranges['xi']), eta_max=ranges['eta_max'],
                            xi_scan=XiScanConfig(**ranges['xi_scan'])),
        study=StudyConfig(**v['study']),
        continuation=continuation,
        simulate=SimulateConfig(**v['simulate']),
        output_dir=v['output']['directory'],
        seed=v['seed'],
        source=source,
    )


def load_run_config(path: Union[str, Path]) -> RunConfig:
    """Read, decode and validate the JSON run configuration at path."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding='utf-8'))
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from exc
    run = parse_run_config(data, base_dir=path.parent)
    logger.info("run_config_loaded", path=str(path), n_x=run.grid.n_x, n_a=run.grid.n_a)
    return run


def read_birth_samples(path: Union[str, Path]) -> Tuple[np.ndarray, np.ndarray]:
    """Two-column CSV (age,value) with a header row."""
    ages, values = [], []
    try:
        with open(path, newline='', encoding='utf-8') as handle:
            reader = csv.DictReader(handle)
            if reader.fieldnames is None or not {'age', 'value'} <= set(reader.fieldnames):
                raise ConfigurationError(f"birth sample file {path} needs an 'age,value' header")
            for row in reader:
                ages.append(float(row['age']))
                values.append(float(row['value']))
    except OSError as exc:
        raise ConfigurationError(f"cannot read birth sample file {path}: {exc.strerror or exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"birth sample file {path} holds a non-numeric entry: {exc}") from exc
    return np.array(ages), np.array(values)


def raw_birth_profile(run: RunConfig, disc: Discretization) -> BirthProfile:
    ages = disc.ages
    birth = run.birth
    if birth.shape == 'constant':
        return BirthProfile.constant(ages, birth.scale)
    if birth.shape == 'ramp':
        return BirthProfile.ramp(ages, birth.scale)
    sample_ages, sample_values = read_birth_samples(birth.path)
    return BirthProfile.from_samples(ages, sample_ages, sample_values, birth.scale)


def build_discretization(run: RunConfig) -> Discretization:
    return Discretization.build(run.grid.n_x, run.grid.n_a, run.grid.a_m)


def build_problem(run: RunConfig) -> Tuple[BifurcationProblem, float]:
    """
    Discretization, normalized birth profile and model coefficients.

    Returns the problem and the normalization constant c.
    """
    disc = build_discretization(run)
    b_raw = raw_birth_profile(run, disc)
    b, constant = normalize_birth(disc, b_raw, tol=run.shooting.power_tol)
    return BifurcationProblem(disc, b, run.model, run.shooting), constant
