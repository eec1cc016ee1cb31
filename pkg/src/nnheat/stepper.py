"""Backward-Euler time loop with a damped, decoupled fixed-point iteration per step.

Each step iterates: solve the momentum system with lagged velocity and
temperature, solve the temperature system with the new velocity and the
lagged temperature, then relax both toward the new values. The iteration
stops once the residuals of both nonlinear discrete equations, evaluated at
the current iterate, drop below ``picard_tol`` relative to the right-hand
sides.
"""

from dataclasses import dataclass, field, replace
import logging
import math
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .constitutive import ConductivityLaw, ConstitutiveModel, newtonian
from .errors import ConfigError, LinearSolveFailed, PicardDiverged
from .forms import Discretization, assemble_momentum_system, assemble_temperature_system
from .mesh import build_structured_mesh, read_mesh
from .scenarios import Scenario, get_scenario
from .spaces import DATA_DEGREE, DiscreteField, interpolate, load_vector

log = logging.getLogger(__name__)

# 3-point Gauss-Legendre nodes/weights on [0, 1]
_GAUSS_T = 0.5 + 0.5 * np.array([-math.sqrt(0.6), 0.0, math.sqrt(0.6)])
_GAUSS_W = np.array([5.0, 8.0, 5.0]) / 18.0

MIN_DAMPING = 0.125


def min_penalty_exponent(r):
    """Lower bound ``max(2 r', 5)`` that the penalty exponent must exceed."""
    return max(2.0 * r / (r - 1.0), 5.0)


@dataclass
class RunConfig:
    """Parameters of one simulation.

    The mesh is the structured ``nx`` by ``ny`` triangulation of the unit
    square unless ``mesh_file`` is given. ``r_star`` defaults to
    ``max(2 r', 5) + 1``.
    """

    nx: int = 16
    ny: Optional[int] = None
    mesh_file: Optional[str] = None
    model: ConstitutiveModel = field(default_factory=newtonian)
    law: ConductivityLaw = field(default_factory=ConductivityLaw)
    T: float = 0.1
    tau: float = 0.01
    k: float = math.inf
    r_star: Optional[float] = None
    picard_tol: float = 1e-8
    picard_max: int = 50
    damping: float = 1.0
    mass_lumping: bool = False
    scenario: str = "decay"
    output_dir: Optional[str] = None
    vtk_every: int = 0

    def __post_init__(self):
        if self.ny is None:
            self.ny = self.nx
        if self.r_star is None:
            self.r_star = min_penalty_exponent(self.model.r) + 1.0
        self.validate()

    def validate(self):
        if self.mesh_file is None and (int(self.nx) != self.nx or self.nx < 1 or int(self.ny) != self.ny or self.ny < 1):
            raise ConfigError(f"mesh.nx and mesh.ny must be positive integers, got {self.nx}, {self.ny}")
        if not self.tau > 0:
            raise ConfigError(f"time.tau must be positive, got {self.tau}")
        if not self.T > 0:
            raise ConfigError(f"time.T must be positive, got {self.T}")
        ratio = self.T / self.tau
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ConfigError(f"time.T / time.tau must be an integer, got {ratio:.12g}")
        if not (self.k >= 1.0):
            raise ConfigError(f"penalty.k must be >= 1 or inf, got {self.k}")
        bound = min_penalty_exponent(self.model.r)
        if not self.r_star > bound:
            raise ConfigError(
                f"penalty.r_star must exceed max{{2r',5}} = {bound:.6g} for r = {self.model.r:g}, got {self.r_star}"
            )
        if not 0.0 < self.picard_tol < 1.0:
            raise ConfigError(f"solver.picard_tol must lie in (0, 1), got {self.picard_tol}")
        if int(self.picard_max) != self.picard_max or self.picard_max < 1:
            raise ConfigError(f"solver.picard_max must be a positive integer, got {self.picard_max}")
        if not 0.0 < self.damping <= 1.0:
            raise ConfigError(f"solver.damping must lie in (0, 1], got {self.damping}")

    @property
    def n_steps(self):
        return int(round(self.T / self.tau))

    def with_(self, **changes):
        return replace(self, **changes)

    def build_mesh(self):
        if self.mesh_file is not None:
            return read_mesh(self.mesh_file)
        return build_structured_mesh(self.nx, self.ny)


@dataclass
class StepState:
    """Discrete solution at one time level plus solver statistics.

    ``force`` is the load vector (over all velocity dofs) that produced the
    state, kept for the energy balance; ``None`` means no forcing.
    """

    t: float
    u: DiscreteField
    p: DiscreteField
    theta: DiscreteField
    picard_iters: int = 0
    picard_residual: float = 0.0
    force: Optional[np.ndarray] = None
    index: int = 0


@dataclass
class Trajectory:
    """Time levels ``t_j = j tau`` (including the initial state) and their diagnostics."""

    states: list
    diagnostics: list
    tau: float
    config: RunConfig
    disc: Discretization

    def __len__(self):
        return len(self.states)

    @property
    def times(self):
        return np.array([s.t for s in self.states])

    def _index(self, t):
        j = math.ceil(t / self.tau - 1e-12)
        return min(max(j, 0), len(self.states) - 1)

    def piecewise_constant(self, t, name="u"):
        """Coefficients of the field on the level ``j`` with ``t`` in ``(t_{j-1}, t_j]``."""
        return getattr(self.states[self._index(t)], name).coeffs

    def piecewise_linear(self, t, name="u"):
        """Linear interpolation in time between neighbouring levels."""
        j = self._index(t)
        if j == 0:
            return getattr(self.states[0], name).coeffs.copy()
        a, b = self.states[j - 1], self.states[j]
        s = (t - a.t) / (b.t - a.t)
        return (1.0 - s) * getattr(a, name).coeffs + s * getattr(b, name).coeffs


def time_average_force(f, t0, t1):
    """Time average ``(1/(t1-t0)) int_{t0}^{t1} f(t, x) dt`` as a callable of points.

    Uses the 3-point Gauss rule, exact for polynomials of degree 5 in time.
    """
    if not t1 > t0:
        raise ValueError(f"need t1 > t0, got [{t0}, {t1}]")
    if f is None:
        return None
    times = t0 + (t1 - t0) * _GAUSS_T

    def average(points):
        return sum(w * np.asarray(f(t, points), dtype=float) for w, t in zip(_GAUSS_W, times))

    return average


def _factor(matrix):
    try:
        return splu(sp.csc_matrix(matrix))
    except RuntimeError as exc:
        raise LinearSolveFailed(f"sparse factorization failed: {exc}") from exc


def _solve(matrix, rhs):
    x = _factor(matrix).solve(rhs)
    if not np.all(np.isfinite(x)):
        raise LinearSolveFailed("linear solve produced non-finite values")
    return x


def _relative_residual(system, x):
    ax = system.matrix @ x
    scale = max(np.linalg.norm(system.rhs), np.linalg.norm(ax), 1e-300)
    return float(np.linalg.norm(ax - system.rhs) / scale)


def mean_zero(p):
    """Pressure shifted to zero mean."""
    M = p.space.mass_matrix()
    area = M.sum()
    return DiscreteField(p.space, p.coeffs - (M @ p.coeffs).sum() / area)


def project_divergence_free(disc, u0):
    """L2 projection of a callable onto discretely divergence-free velocities.

    Solves the saddle-point problem ``M u + B^T p = P u0, B u = 0`` on
    velocities with zero boundary trace.
    """
    rhs_u = load_vector(disc.velocity, u0)[disc.free]
    B = disc.divergence[disc.kept_pressure]
    K = sp.bmat([[disc.velocity_mass, B.T], [B, None]], format="csc")
    x = _solve(K, np.concatenate([rhs_u, np.zeros(B.shape[0])]))
    return DiscreteField(disc.velocity, disc.expand_velocity(x[: disc.n_free]))


def initialize(config, scenario=None, disc=None):
    """Initial state: projected velocity, interpolated temperature, zero pressure."""
    scenario = _resolve_scenario(config, scenario)
    disc = disc or Discretization(config.build_mesh())
    u = project_divergence_free(disc, scenario.u0)
    theta = interpolate(disc.temperature, scenario.theta0)
    tmin = float(theta.coeffs.min())
    if tmin <= 0.0:
        raise ValueError(f"initial temperature must be positive, minimum nodal value is {tmin:.6g}")
    if tmin < scenario.theta_min - 1e-12:
        raise ValueError(
            f"initial temperature {tmin:.6g} is below the scenario lower bound {scenario.theta_min:.6g}"
        )
    return StepState(0.0, u, disc.pressure.zero(), theta)


def _resolve_scenario(config, scenario):
    if scenario is None:
        return get_scenario(config.scenario)
    if isinstance(scenario, str):
        return get_scenario(scenario)
    if not isinstance(scenario, Scenario):
        raise TypeError("scenario must be a Scenario or a registered name")
    return scenario


def _state_vector(disc, u, p):
    return np.concatenate([u.coeffs[disc.free], p.coeffs[disc.kept_pressure] - p.coeffs[disc.pinned_pressure]])


def step(prev, config, disc, force=None, theta_source=None):
    """Advance one time step of length ``config.tau``.

    Parameters
    ----------
    prev : StepState
    config : RunConfig
    disc : Discretization
    force, theta_source : callable of points or None
        Time-averaged body force and (verification-only) heat source.

    Raises
    ------
    PicardDiverged
        If the residual does not reach ``picard_tol`` within ``picard_max``
        iterations, or an iterate loses temperature positivity.
    LinearSolveFailed
    """
    tau, model = config.tau, config.model
    load = load_vector(disc.velocity, force, DATA_DEGREE) if force is not None else None
    source = load_vector(disc.temperature, theta_source, DATA_DEGREE) if theta_source is not None else None

    def momentum(u_lag, th_lag):
        return assemble_momentum_system(disc, prev.u, u_lag, th_lag, tau, load, model, config.k, config.r_star)

    def temperature(u_new, th_lag):
        return assemble_temperature_system(
            disc, prev.theta, u_new, th_lag, tau, config.law, model, config.mass_lumping, source
        )

    u, p, theta = prev.u, prev.p, prev.theta
    omega = config.damping
    last = math.inf
    iters = 0
    while True:
        try:
            sys_u = momentum(u, theta)
            if iters > 0:
                res = max(
                    _relative_residual(sys_u, _state_vector(disc, u, p)),
                    _relative_residual(temperature(u, theta), theta.coeffs),
                )
                log.debug("t=%.6g iteration %d residual %.3e damping %.3g", prev.t + tau, iters, res, omega)
                if res <= config.picard_tol:
                    break
                if iters >= config.picard_max:
                    raise PicardDiverged(
                        f"fixed-point iteration did not converge in {iters} iterations "
                        f"(residual {res:.3e} > tol {config.picard_tol:.1e}) at t = {prev.t + tau:.6g}",
                        iterations=iters,
                        residual=res,
                    )
                if res > last and omega > MIN_DAMPING:
                    omega = max(0.5 * omega, MIN_DAMPING)
                last = res
            x = _solve(sys_u.matrix, sys_u.rhs)
            u_new = DiscreteField(disc.velocity, disc.expand_velocity(x[: disc.n_free]))
            p_coeffs = np.zeros(disc.pressure.dof_count)
            p_coeffs[disc.kept_pressure] = x[disc.n_free :]
            p_new = DiscreteField(disc.pressure, p_coeffs)
            sys_t = temperature(u_new, theta)
            th_new = DiscreteField(disc.temperature, _solve(sys_t.matrix, sys_t.rhs))
        except ValueError as exc:
            raise PicardDiverged(
                f"fixed-point iteration failed at t = {prev.t + tau:.6g}: {exc}", iterations=iters
            ) from exc
        iters += 1
        if omega == 1.0:
            u, p, theta = u_new, p_new, th_new
        else:
            u = DiscreteField(disc.velocity, (1 - omega) * u.coeffs + omega * u_new.coeffs)
            p = DiscreteField(disc.pressure, (1 - omega) * p.coeffs + omega * p_new.coeffs)
            theta = DiscreteField(disc.temperature, (1 - omega) * theta.coeffs + omega * th_new.coeffs)
    p_coeffs = p.coeffs - p.coeffs[disc.pinned_pressure]
    return StepState(
        prev.t + tau,
        u,
        mean_zero(DiscreteField(disc.pressure, p_coeffs)),
        theta,
        picard_iters=iters,
        picard_residual=res,
        force=load,
        index=prev.index + 1,
    )


def run(config, scenario=None, force=None, theta_source=None, disc=None, record=True):
    """Simulate ``config.n_steps`` steps from the scenario's initial data.

    ``force`` and ``theta_source`` default to the scenario's forcing; both are
    callables ``f(t, points)`` averaged over each step.
    """
    from .diagnostics import diagnostics_record

    scenario = _resolve_scenario(config, scenario)
    disc = disc or Discretization(config.build_mesh())
    force = force if force is not None else scenario.force
    theta_source = theta_source if theta_source is not None else scenario.theta_source
    state = initialize(config, scenario, disc)
    states = [state]
    records = [diagnostics_record(None, state, config)] if record else []
    for j in range(1, config.n_steps + 1):
        t0, t1 = (j - 1) * config.tau, j * config.tau
        nxt = step(
            state,
            config,
            disc,
            time_average_force(force, t0, t1),
            time_average_force(theta_source, t0, t1),
        )
        nxt.t = t1  # avoid drift from repeated addition
        if record:
            records.append(diagnostics_record(state, nxt, config))
        states.append(nxt)
        state = nxt
    return Trajectory(states, records, config.tau, config, disc)
