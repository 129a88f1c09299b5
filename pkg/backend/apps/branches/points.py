"""
Bifurcation points off the semi-trivial branches and their kernel tangents.

    eta0(xi)     prey bifurcates from (0, v_xi):      eta0 = 1 / r(G_xi)
    xi0(eta)     predator bifurcates from (u_eta, 0):  xi0 = 1 / r(H_[-beta2 u_eta])
    eta1(xi)     inverse of xi0 for xi < 1
    xi1(eta)     root in xi of eta * r(G_xi) - 1, if any

Tangents are returned as traces at age 0 plus the full AgeField kernel
components; the continuation launch only needs the traces.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import structlog
from scipy.optimize import brentq

from apps.common.exceptions import NoBifurcation, SolverError
from apps.evolve.steppers import evolve_conservative, evolve_duhamel, evolve_linear
from apps.grid.meshes import AgeField, BirthProfile, SpatialField
from apps.grid.operators import Discretization
from apps.spectral.radius import assemble_G, assemble_H, spectral_radius

from .params import ModelParams
from .semitrivial import SemitrivialBranch, SemiTrivialSolution
from .shooting import DEFAULT_SHOOTING, ShootingConfig

logger = structlog.get_logger(__name__)

ETA1_LOWER = 1.0 + 1e-4
DEFAULT_ETA_MAX = 1000.0
DELTA_LADDER = (10.0, 100.0, 1000.0)
# xi0 may touch 1 within the power-iteration tolerance when beta2 is tiny
XI0_SLACK = 1e-10


class BifurcationProblem:
    """
    Grid, birth profile and coefficients, with one semi-trivial branch cache per species.

    Every locator below takes a problem so repeated queries reuse converged
    semi-trivial solutions.
    """

    def __init__(self, disc: Discretization, b: BirthProfile, params: ModelParams,
                 shooting: ShootingConfig = DEFAULT_SHOOTING):
        self.disc = disc
        self.b = b
        self.params = params
        self.shooting = shooting
        self.prey = SemitrivialBranch(disc, b, params.alpha1, shooting, species='u')
        self.predator = SemitrivialBranch(disc, b, params.beta1, shooting, species='v')

    def radius(self, operator) -> float:
        return self.perron(operator).radius

    def perron(self, operator):
        return spectral_radius(operator, tol=self.shooting.power_tol,
                               max_iter=self.shooting.power_max_iter)

    def u_eta(self, eta: float) -> SemiTrivialSolution:
        return self.prey.solve(eta)

    def v_xi(self, xi: float) -> SemiTrivialSolution:
        return self.predator.solve(xi)

    def predation_radius(self, eta: float) -> float:
        """r(H_[-beta2 u_eta])."""
        u = self.u_eta(eta).field
        return self.radius(assemble_H(self.disc, -self.params.beta2 * u, self.b, label='-beta2*u'))

    def g_operator(self, xi: float):
        return assemble_G(self.disc, self.v_xi(xi).field, self.params, self.b,
                          floor=self.shooting.stepper.diffusion_floor)


@dataclass(frozen=True, eq=False)
class TangentData:
    """
    Kernel direction at a bifurcation point.

    vanishing:        the species that is zero on the base branch ('u' or 'v')
    mu:               the parameter varied away from the point ('eta' or 'xi')
    eigen_trace:      Phi0 (vanishing u) or Psi1 (vanishing v), sup-norm one
    correction_trace: Psi0 or Phi1, the trace of the other component
    phi, psi:         kernel AgeFields; for a vanishing v the prey component is
                      phi_star with u = u_eta - s * phi_star
    """

    kind: str
    mu: str
    value: float
    eta: float
    xi: float
    vanishing: str
    eigen_trace: SpatialField
    correction_trace: SpatialField
    phi: AgeField
    psi: AgeField
    base: SemiTrivialSolution
    resolvent_radius: float
    extra: Dict[str, float] = field(default_factory=dict)

    def base_traces(self) -> Tuple[SpatialField, SpatialField]:
        zero = np.zeros_like(self.base.trace)
        if self.vanishing == 'u':
            return zero, self.base.trace.copy()
        return self.base.trace.copy(), zero

    def direction(self) -> Tuple[SpatialField, SpatialField]:
        """Trace direction (du0, dv0) per unit amplitude of the vanishing component."""
        if self.vanishing == 'u':
            return self.eigen_trace.copy(), self.correction_trace.copy()
        return -self.correction_trace, self.eigen_trace.copy()

    def to_dict(self) -> Dict:
        return {
            'kind': self.kind,
            'mu': self.mu,
            'value': self.value,
            'eta': self.eta,
            'xi': self.xi,
            'vanishing': self.vanishing,
            'resolvent_radius': self.resolvent_radius,
            **self.extra,
        }


# ============================================================================
# Bifurcation from the predator-only branch (0, v_xi)
# ============================================================================

def _predator_tangent(problem: BifurcationProblem, xi: float, kind: str, mu: str,
                      eta: Optional[float] = None) -> TangentData:
    disc, b, p = problem.disc, problem.b, problem.params
    v_sol = problem.v_xi(xi)
    v = v_sol.field
    perron = problem.perron(problem.g_operator(xi))
    eta0_value = 1.0 / perron.radius
    phi0 = perron.eigvec
    phi_star = evolve_conservative(disc, 1.0 + p.gamma * v, p.alpha2 * v, phi0,
                                   floor=problem.shooting.stepper.diffusion_floor)

    h = 2.0 * p.beta1 * v
    forcing = p.beta2 * v * phi_star
    forced = disc.age_integral(evolve_duhamel(disc, h, forcing), b)
    h_operator = assemble_H(disc, h, b, label='2*beta1*v')
    resolvent_radius = xi * problem.radius(h_operator)
    psi0 = _resolvent_solve(xi, h_operator.matrix, xi * forced, resolvent_radius, 'Psi0')
    psi_star = evolve_duhamel(disc, h, forcing, psi0)

    eta_value = eta0_value if eta is None else eta
    value = eta0_value if mu == 'eta' else xi
    logger.info("predator_branch_bifurcation", kind=kind, xi=xi, eta0=eta0_value,
                resolvent_radius=resolvent_radius, power_iterations=perron.iterations)
    return TangentData(
        kind=kind, mu=mu, value=value, eta=eta_value, xi=xi, vanishing='u',
        eigen_trace=phi0, correction_trace=psi0, phi=phi_star, psi=psi_star,
        base=v_sol, resolvent_radius=resolvent_radius,
        extra={'eta0': eta0_value, 'power_residual': perron.residual},
    )


def _resolvent_solve(scale: float, h_matrix: np.ndarray, rhs: SpatialField,
                     radius: float, name: str) -> SpatialField:
    """Solve (I - scale * H) x = rhs; singular only if scale * r(H) reaches 1."""
    system = np.eye(h_matrix.shape[0]) - scale * h_matrix
    try:
        return np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:
        raise SolverError(
            f"resolvent system for {name} is singular (internal error)",
            {'radius': radius, 'scale': scale},
        ) from exc


def eta0(problem: BifurcationProblem, xi: float) -> Tuple[float, TangentData]:
    """
    eta0 = 1 / r(G_xi) with the kernel (phi_star, psi_star).

    phi_star = Pi_{A_xi} Phi0 and psi_star solves the forced predator
    linearization with trace Psi0 from the resolvent of xi H_[2 beta1 v_xi].
    """
    tangent = _predator_tangent(problem, xi, kind='eta0', mu='eta')
    return tangent.value, tangent


# ============================================================================
# Bifurcation from the prey-only branch (u_eta, 0)
# ============================================================================

def _prey_tangent(problem: BifurcationProblem, eta: float, xi: float, kind: str, mu: str) -> TangentData:
    disc, b, p = problem.disc, problem.b, problem.params
    u_sol = problem.u_eta(eta)
    u = u_sol.field
    perron = problem.perron(assemble_H(disc, -p.beta2 * u, b, label='-beta2*u'))
    psi1 = perron.eigvec
    psi_star = evolve_linear(disc, -p.beta2 * u, psi1)
    product = u * psi_star
    lap = disc.laplacian.matrix
    # rows are ages; L acts on each spatial row
    forcing = -(lap @ (p.gamma * product).T).T + p.alpha2 * product

    h = 2.0 * p.alpha1 * u
    forced_field = evolve_duhamel(disc, h, forcing)
    h_operator = assemble_H(disc, h, b, label='2*alpha1*u')
    resolvent_radius = eta * problem.radius(h_operator)
    phi1 = _resolvent_solve(eta, h_operator.matrix, eta * disc.age_integral(forced_field, b),
                            resolvent_radius, 'Phi1')
    phi_star = evolve_linear(disc, h, phi1) + forced_field

    value = eta if mu == 'eta' else xi
    logger.info("prey_branch_bifurcation", kind=kind, eta=eta, xi=xi,
                resolvent_radius=resolvent_radius, power_iterations=perron.iterations)
    return TangentData(
        kind=kind, mu=mu, value=value, eta=eta, xi=xi, vanishing='v',
        eigen_trace=psi1, correction_trace=phi1, phi=phi_star, psi=psi_star,
        base=u_sol, resolvent_radius=resolvent_radius,
        extra={'predation_radius': perron.radius, 'power_residual': perron.residual},
    )


def xi0(problem: BifurcationProblem, eta: float) -> float:
    """
    xi0 = 1 / r(H_[-beta2 u_eta]); lies in (0, 1) for every eta > 1.

    Raises:
        NoBifurcation: the computed value leaves (0, 1 + XI0_SLACK]
    """
    radius = problem.predation_radius(eta)
    value = 1.0 / radius if radius > 0 else float('inf')
    if not 0.0 < value <= 1.0 + XI0_SLACK:
        raise NoBifurcation(
            f"xi0 = {value:.6g} at eta = {eta} lies outside (0, 1)",
            {'eta': eta, 'xi0': value, 'predation_radius': radius},
        )
    logger.info("xi0_located", eta=eta, xi0=value)
    return value


def xi0_tangent(problem: BifurcationProblem, eta: float) -> TangentData:
    """Tangent at (xi0(eta), u_eta, 0) for continuation in xi with eta fixed."""
    return _prey_tangent(problem, eta, xi0(problem, eta), kind='xi0', mu='xi')


def eta1(problem: BifurcationProblem, xi: float,
         eta_max: float = DEFAULT_ETA_MAX) -> Tuple[float, TangentData]:
    """
    Root in eta of xi * r(H_[-beta2 u_eta]) = 1 on [1 + 1e-4, eta_max].

    The radius is strictly increasing in eta, so a bracketed root is unique.

    Raises:
        NoBifurcation: no sign change up to eta_max (xi at or below the delta estimate)
    """
    def gap(eta: float) -> float:
        return xi * problem.predation_radius(eta) - 1.0

    lower = gap(ETA1_LOWER)
    upper = gap(eta_max)
    if lower >= 0.0 or upper <= 0.0:
        raise NoBifurcation(
            f"xi = {xi} has no eta1 in [{ETA1_LOWER}, {eta_max}]",
            {'xi': xi, 'eta_max': eta_max, 'gap_lower': lower, 'gap_upper': upper},
        )
    root = brentq(gap, ETA1_LOWER, eta_max, xtol=1e-12, rtol=1e-13, maxiter=200)
    logger.info("eta1_located", xi=xi, eta1=root, gap=gap(root))
    return root, _prey_tangent(problem, root, xi, kind='eta1', mu='eta')


@dataclass(frozen=True)
class DeltaEstimate:
    value: float
    sequence: List[Tuple[float, float]]
    monotone: bool

    def to_dict(self) -> Dict:
        return {
            'delta_hat': self.value,
            'sequence': [{'eta': eta, 'estimate': est} for eta, est in self.sequence],
            'monotone_decreasing': self.monotone,
        }


def delta_estimate(problem: BifurcationProblem, eta_max: float = DEFAULT_ETA_MAX) -> DeltaEstimate:
    """
    Upper estimate of delta: 1 / r(H_[-beta2 u_eta_max]), with the values
    over eta in {10, 100, 1000} (capped at eta_max) as convergence evidence.
    """
    ladder = [eta for eta in DELTA_LADDER if eta < eta_max] + [eta_max]
    sequence = [(eta, 1.0 / problem.predation_radius(eta)) for eta in ladder]
    values = [est for _, est in sequence]
    monotone = all(later < earlier for earlier, later in zip(values, values[1:]))
    if not monotone:
        logger.warning("delta_sequence_not_monotone", sequence=values)
    logger.info("delta_estimated", eta_max=eta_max, delta_hat=values[-1])
    return DeltaEstimate(values[-1], sequence, monotone)


# ============================================================================
# Connection to the predator-only branch: eta * r(G_xi) = 1
# ============================================================================

def xi1_residual(problem: BifurcationProblem, eta: float, xi: float) -> float:
    """eta * r(G_xi) - 1. No root is guaranteed to exist."""
    return eta * problem.radius(problem.g_operator(xi)) - 1.0


@dataclass(frozen=True)
class Xi1Scan:
    eta: float
    points: List[Tuple[float, float]]
    sign_changes: List[Tuple[float, float]]

    def to_dict(self) -> Dict:
        return {
            'eta': self.eta,
            'points': [{'xi': xi, 'residual': res} for xi, res in self.points],
            'sign_changes': [{'lower': lo, 'upper': hi} for lo, hi in self.sign_changes],
        }


def scan_xi1(problem: BifurcationProblem, eta: float, xis) -> Xi1Scan:
    """Residual curve over an increasing xi grid with bracketing intervals flagged."""
    points = [(float(xi), xi1_residual(problem, eta, float(xi))) for xi in xis]
    changes = [
        (x0, x1) for (x0, r0), (x1, r1) in zip(points, points[1:])
        if np.sign(r0) != np.sign(r1)
    ]
    logger.info("xi1_scanned", eta=eta, points=len(points), sign_changes=len(changes))
    return Xi1Scan(eta, points, changes)


def find_xi1(problem: BifurcationProblem, eta: float, lower: float, upper: float) -> float:
    """brentq on a bracket from scan_xi1."""
    try:
        root = brentq(lambda xi: xi1_residual(problem, eta, xi), lower, upper,
                      xtol=1e-12, rtol=1e-12, maxiter=200)
    except ValueError as exc:
        raise NoBifurcation(
            f"eta * r(G_xi) - 1 does not change sign on [{lower}, {upper}]",
            {'eta': eta, 'lower': lower, 'upper': upper},
        ) from exc
    logger.info("xi1_located", eta=eta, xi1=root)
    return root


def xi1_tangent(problem: BifurcationProblem, eta: float, xi1_value: float) -> TangentData:
    """Tangent at (xi1, 0, v_xi1) for continuation in xi with eta fixed."""
    return _predator_tangent(problem, xi1_value, kind='xi1', mu='xi', eta=eta)
