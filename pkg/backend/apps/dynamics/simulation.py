"""
Time-dependent age-structured system on the characteristic grid dt = da.

One step:
    renewal      u(t+dt, 0) = eta AI(u(t)),  v(t+dt, 0) = xi AI(v(t))
    transport    slice k of the new state starts from slice k-1 of the old one
    reaction     one implicit coupled step on every transported slice

The reaction step is the same solve the steady-state evolution uses, so
a discrete steady state is a fixed point of this scheme.
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import structlog

from apps.branches.params import ModelParams
from apps.common.exceptions import ShapeMismatchError
from apps.evolve.steppers import DEFAULT_STEPPER, StepperConfig, coupled_step
from apps.grid.meshes import AgeField, BirthProfile
from apps.grid.operators import Discretization

logger = structlog.get_logger(__name__)


@dataclass(frozen=True, eq=False)
class PopulationState:
    t: float
    u: AgeField
    v: AgeField

    def __post_init__(self):
        if np.shape(self.u) != np.shape(self.v):
            raise ShapeMismatchError(f"u and v differ in shape: {np.shape(self.u)} vs {np.shape(self.v)}")

    @classmethod
    def at_rest(cls, u: AgeField, v: AgeField, t: float = 0.0) -> 'PopulationState':
        return cls(t, np.array(u, dtype=float), np.array(v, dtype=float))


def _advance(disc: Discretization, b: BirthProfile, state: PopulationState, eta: float, xi: float,
             params: ModelParams, cfg: StepperConfig, step: int) -> PopulationState:
    u_new = np.empty_like(state.u)
    v_new = np.empty_like(state.v)
    u_new[0] = eta * disc.age_integral(state.u, b)
    v_new[0] = xi * disc.age_integral(state.v, b)
    # slices 0..n_a-1 advance one age step as a batch of n_a trajectories
    u_next, v_next, _ = coupled_step(disc, state.u[:-1].T, state.v[:-1].T, params, cfg, step=step)
    u_new[1:] = u_next.T
    v_new[1:] = v_next.T
    return PopulationState(state.t + disc.da, u_new, v_new)


def simulate(disc: Discretization, b: BirthProfile, params: ModelParams, init: PopulationState,
             eta: float, xi: float, t_end: float, cfg: StepperConfig = DEFAULT_STEPPER,
             sample_every: int = 1) -> List[PopulationState]:
    """
    Integrate up to t_end with dt = da; returns every `sample_every`-th state,
    the initial and the final one included.
    """
    shape = (disc.n_a + 1, disc.n_x)
    if np.shape(init.u) != shape:
        raise ShapeMismatchError(f"initial state has shape {np.shape(init.u)}, grid needs {shape}")
    if np.any(init.u < 0) or np.any(init.v < 0):
        raise ValueError("initial populations must be nonnegative")
    if sample_every < 1:
        raise ValueError(f"sample_every must be >= 1, got {sample_every}")
    n_steps = int(round(t_end / disc.da))
    state = init
    trajectory = [state]
    for step in range(1, n_steps + 1):
        state = _advance(disc, b, state, eta, xi, params, cfg, step)
        if step % sample_every == 0 or step == n_steps:
            trajectory.append(state)
    logger.info("simulation_finished", steps=n_steps, t_end=state.t, eta=eta, xi=xi,
                samples=len(trajectory))
    return trajectory


@dataclass(frozen=True)
class DistanceSeries:
    times: List[float]
    distances: List[float]
    monotone_tail: bool

    @property
    def final(self) -> float:
        return self.distances[-1]


def _monotone_tail(values: Sequence[float]) -> bool:
    tail = values[len(values) // 2:]
    return all(later <= earlier for earlier, later in zip(tail, tail[1:]))


def steady_state_distance(disc: Discretization, trajectory: Sequence[PopulationState],
                          target: PopulationState) -> DistanceSeries:
    """Discrete L2 distance over age x space to the target, per sample, with a tail-monotonicity flag."""
    distances = [
        float(np.hypot(disc.age_space_norm(state.u - target.u), disc.age_space_norm(state.v - target.v)))
        for state in trajectory
    ]
    return DistanceSeries([state.t for state in trajectory], distances, _monotone_tail(distances))


def constant_in_age(disc: Discretization, profile, level: float = 1.0) -> AgeField:
    """The same spatial profile at every age node."""
    return np.tile(level * np.asarray(profile, dtype=float), (disc.n_a + 1, 1))


def small_state(disc: Discretization, amplitude: float = 1e-2,
                profile: Optional[np.ndarray] = None) -> PopulationState:
    profile = disc.principal[1] if profile is None else profile
    field = constant_in_age(disc, profile, amplitude)
    return PopulationState.at_rest(field, field.copy())
