"""Manufactured solutions, convergence studies and the perturbation (weak-strong) experiment.

Fields of the shipped cases, with ``A(s) = sin^2(pi s)``, ``C(s) = cos(pi s)``
and ``e = exp(-t)``::

    stream  psi   = A(x) A(y) e
    velocity u    = (psi_y, -psi_x) = e (A(x) A'(y), -A'(x) A(y))
    pressure p    = C(x) C(y) e
    temperature   = 2 + C(x) C(y) e

``u`` vanishes on the boundary of the unit square and is divergence free;
the temperature stays in ``[1, 3]``. With ``A' = pi sin(2 pi s)``,
``A'' = 2 pi^2 cos(2 pi s)`` and ``A''' = -4 pi^3 sin(2 pi s)`` the strain is

    Du = [[a, b], [b, -a]],  a = e A'(x) A'(y),  b = e (A(x) A''(y) - A''(x) A(y)) / 2.

For ``S = nu(|Du|^2, theta) Du`` and divergence-free ``u``

    (div S)_i = nu Delta u_i / 2 + sum_j Du_ij d_j nu,
    d_j nu    = nu_z d_j |Du|^2 + nu_theta d_j theta,   d_j |Du|^2 = 4 (a d_j a + b d_j b),

so the sources that make the fields an exact solution are

    f = -u + (u . grad) u - div S + grad p
    g = d_t theta + u . grad theta - kappa Delta theta - kappa' |grad theta|^2 - S : Du.

The heat source ``g`` exists only for verification; the physical model has none.
"""

from dataclasses import dataclass, field
import math
from typing import Callable, Optional

import numpy as np

from .constitutive import (
    ConductivityLaw,
    ConstitutiveModel,
    conductivity,
    newtonian,
    viscosity_derivatives,
)
from .diagnostics import gronwall_fit, relative_energy_density
from .errors import ConfigError
from .scenarios import Scenario, bump_stream_velocity, cellular_stream_velocity, get_scenario
from .spaces import DATA_DEGREE, integrate
from .stepper import RunConfig, run

PI = math.pi


def _A(s):
    return np.sin(PI * s) ** 2


def _A1(s):
    return PI * np.sin(2 * PI * s)


def _A2(s):
    return 2 * PI**2 * np.cos(2 * PI * s)


def _A3(s):
    return -4 * PI**3 * np.sin(2 * PI * s)


def _xy(points):
    points = np.asarray(points, dtype=float)
    return points[..., 0], points[..., 1]


def vortex_velocity(t, points):
    x, y = _xy(points)
    e = math.exp(-t)
    return np.stack([e * _A(x) * _A1(y), -e * _A1(x) * _A(y)], axis=-1)


def vortex_velocity_gradient(t, points):
    """``G[..., i, j] = d u_i / d x_j``."""
    x, y = _xy(points)
    e = math.exp(-t)
    G = np.empty(x.shape + (2, 2))
    G[..., 0, 0] = e * _A1(x) * _A1(y)
    G[..., 0, 1] = e * _A(x) * _A2(y)
    G[..., 1, 0] = -e * _A2(x) * _A(y)
    G[..., 1, 1] = -e * _A1(x) * _A1(y)
    return G


def vortex_strain(t, points):
    G = vortex_velocity_gradient(t, points)
    return 0.5 * (G + np.swapaxes(G, -1, -2))


def wave_pressure(t, points):
    x, y = _xy(points)
    return math.exp(-t) * np.cos(PI * x) * np.cos(PI * y)


def wave_temperature(t, points):
    return 2.0 + wave_pressure(t, points)


def _wave_gradient(t, points):
    x, y = _xy(points)
    e = math.exp(-t)
    return np.stack(
        [-PI * e * np.sin(PI * x) * np.cos(PI * y), -PI * e * np.cos(PI * x) * np.sin(PI * y)], axis=-1
    )


def _strain_parts(t, x, y):
    """``a, b`` of the strain and their x/y derivatives."""
    e = math.exp(-t)
    a = e * _A1(x) * _A1(y)
    b = 0.5 * e * (_A(x) * _A2(y) - _A2(x) * _A(y))
    ax = e * _A2(x) * _A1(y)
    ay = e * _A1(x) * _A2(y)
    bx = 0.5 * e * (_A1(x) * _A2(y) - _A3(x) * _A(y))
    by = 0.5 * e * (_A(x) * _A3(y) - _A2(x) * _A1(y))
    return a, b, ax, ay, bx, by


def vortex_momentum_source(model, t, points):
    x, y = _xy(points)
    e = math.exp(-t)
    u = vortex_velocity(t, points)
    G = vortex_velocity_gradient(t, points)
    theta = wave_temperature(t, points)
    gtheta = _wave_gradient(t, points)
    a, b, ax, ay, bx, by = _strain_parts(t, x, y)
    z = 2 * a**2 + 2 * b**2
    nu, nu_z, nu_th = viscosity_derivatives(model, z, theta)
    dnu_x = nu_z * 4 * (a * ax + b * bx) + nu_th * gtheta[..., 0]
    dnu_y = nu_z * 4 * (a * ay + b * by) + nu_th * gtheta[..., 1]
    lap_u1 = e * (_A2(x) * _A1(y) + _A(x) * _A3(y))
    lap_u2 = -e * (_A3(x) * _A(y) + _A1(x) * _A2(y))
    div_s1 = 0.5 * nu * lap_u1 + a * dnu_x + b * dnu_y
    div_s2 = 0.5 * nu * lap_u2 + b * dnu_x - a * dnu_y
    conv = np.einsum("...j,...ij->...i", u, G)
    grad_p = _wave_gradient(t, points)
    return -u + conv - np.stack([div_s1, div_s2], axis=-1) + grad_p


def wave_temperature_source(model, law, t, points):
    x, y = _xy(points)
    theta = wave_temperature(t, points)
    gtheta = _wave_gradient(t, points)
    dtheta = -wave_pressure(t, points)
    lap = -2 * PI**2 * wave_pressure(t, points)
    u = vortex_velocity(t, points)
    a, b, *_ = _strain_parts(t, x, y)
    z = 2 * a**2 + 2 * b**2
    nu, _, _ = viscosity_derivatives(model, z, theta)
    kappa = conductivity(law, theta)
    dkappa = law.derivative(theta)
    grad2 = np.sum(gtheta**2, axis=-1)
    return dtheta + np.sum(u * gtheta, axis=-1) - kappa * lap - dkappa * grad2 - nu * z


@dataclass(frozen=True)
class MmsCase:
    """Closed-form solution of the forced system and the forcing that produces it.

    Every callable takes ``(t, points)`` with points of shape (..., 2).
    """

    name: str
    exact_u: Callable
    exact_p: Callable
    exact_theta: Callable
    exact_gradient: Callable
    exact_strain: Callable
    source_momentum: Optional[Callable]
    source_temperature: Optional[Callable]
    model: ConstitutiveModel = field(default_factory=newtonian)
    law: ConductivityLaw = field(default_factory=ConductivityLaw)
    theta_min: float = 1.0

    def scenario(self):
        return Scenario(
            self.name,
            lambda pts: self.exact_u(0.0, pts),
            lambda pts: self.exact_theta(0.0, pts),
            force=self.source_momentum,
            theta_source=self.source_temperature,
            theta_min=self.theta_min,
            description=f"manufactured solution {self.name}",
        )


def _vortex_case(name, model, law):
    return MmsCase(
        name,
        vortex_velocity,
        wave_pressure,
        wave_temperature,
        vortex_velocity_gradient,
        vortex_strain,
        lambda t, pts: vortex_momentum_source(model, t, pts),
        lambda t, pts: wave_temperature_source(model, law, t, pts),
        model=model,
        law=law,
        theta_min=1.0,
    )


def _rest_case():
    def zero_vec(t, pts):
        return np.zeros(np.shape(pts))

    def zero(t, pts):
        return np.zeros(np.shape(pts)[:-1])

    def zero_tensor(t, pts):
        return np.zeros(np.shape(pts)[:-1] + (2, 2))

    return MmsCase(
        "rest_state",
        zero_vec,
        zero,
        lambda t, pts: np.ones(np.shape(pts)[:-1]),
        zero_tensor,
        zero_tensor,
        None,
        None,
        theta_min=1.0,
    )


MMS_CASES = {
    "stokes_heat": lambda: _vortex_case("stokes_heat", newtonian(1.0), ConductivityLaw()),
    "carreau_heat": lambda: _vortex_case(
        "carreau_heat", ConstitutiveModel(kind="carreau_yasuda", r=1.5), ConductivityLaw()
    ),
    "rest_state": _rest_case,
}


def mms_case(name):
    try:
        return MMS_CASES[name]()
    except KeyError:
        raise ConfigError(f"unknown manufactured solution {name!r}; choose from {', '.join(sorted(MMS_CASES))}") from None


def _case(case):
    return mms_case(case) if isinstance(case, str) else case


@dataclass(frozen=True)
class LevelErrors:
    n: int
    h: float
    tau: float
    u_L2: float
    u_H1: float
    u_D: float
    theta_L2: float
    max_picard: int


@dataclass
class ConvergenceTable:
    """Errors at the final time per level and observed orders between consecutive levels."""

    case: str
    study: str
    rows: list

    def orders(self, name, base="h"):
        """``log(e_l / e_{l+1}) / log(ratio)`` where ratio is the ``h`` (or ``tau``) ratio."""
        out = []
        for a, b in zip(self.rows, self.rows[1:]):
            ea, eb = getattr(a, name), getattr(b, name)
            ratio = getattr(a, base) / getattr(b, base)
            if ea <= 0 or eb <= 0:
                out.append(math.nan)
            else:
                out.append(math.log(ea / eb) / math.log(ratio))
        return out

    def format(self):
        base = "tau" if self.study == "time" else "h"
        lines = [f"# {self.case} {self.study} study"]
        names = ("u_L2", "u_H1", "u_D", "theta_L2")
        lines.append(f"{'n':>4} {'h':>10} {'tau':>10} " + " ".join(f"{k:>11} {'ord':>5}" for k in names))
        o = {k: [math.nan] + self.orders(k, base) for k in names}
        for i, r in enumerate(self.rows):
            cols = " ".join(f"{getattr(r, k):>11.4e} {o[k][i]:>5.2f}" for k in names)
            lines.append(f"{r.n:>4} {r.h:>10.4g} {r.tau:>10.4g} {cols}")
        return "\n".join(lines)


def final_errors(trajectory, case):
    """L2 velocity, H1-seminorm velocity, L2 strain and L2 temperature errors at the final time."""
    s = trajectory.states[-1]
    space = s.u.space
    pts = space.mesh.map_points(space.tabulate(DATA_DEGREE)[0].points)
    du = s.u.values(DATA_DEGREE) - case.exact_u(s.t, pts)
    dG = s.u.gradients(DATA_DEGREE) - case.exact_gradient(s.t, pts)
    dD = s.u.sym_gradients(DATA_DEGREE) - case.exact_strain(s.t, pts)
    dth = s.theta.values(DATA_DEGREE) - case.exact_theta(s.t, pts)
    l2 = lambda v: math.sqrt(max(float(integrate(space, v, DATA_DEGREE)), 0.0))
    return (
        l2(np.sum(du * du, axis=-1)),
        l2(np.sum(dG * dG, axis=(-2, -1))),
        l2(np.sum(dD * dD, axis=(-2, -1))),
        l2(dth * dth),
    )


def default_space_levels(levels=4, T=1.0 / 16.0, n0=4):
    """``(n, tau)`` pairs with ``h`` halved and ``tau`` quartered: one step on the coarsest mesh."""
    return [(n0 * 2**i, T / 4**i) for i in range(levels)], T


def default_time_levels(n=32, taus=(0.1, 0.05, 0.025), T=1.0):
    return [(n, tau) for tau in taus], T


def run_convergence(case, levels, T, study="space", base_config=None):
    """Run ``case`` on every ``(n, tau)`` level up to time ``T`` and tabulate final-time errors.

    Raises
    ------
    ValueError
        Fewer than three levels.
    PicardDiverged, LinearSolveFailed
        Propagated with the level added to the message.
    """
    case = _case(case)
    if len(levels) < 3:
        raise ValueError("a convergence study needs at least three levels")
    base = base_config or RunConfig(model=case.model, law=case.law, scenario=case.name)
    rows = []
    for n, tau in levels:
        cfg = base.with_(nx=n, ny=n, tau=tau, T=T, model=case.model, law=case.law, scenario=case.name)
        try:
            traj = run(cfg, case.scenario(), record=False)
        except Exception as exc:
            exc.args = (f"level n={n}, tau={tau:g}: {exc.args[0] if exc.args else exc}",) + exc.args[1:]
            raise
        eu, eG, eD, eth = final_errors(traj, case)
        iters = max((s.picard_iters for s in traj.states[1:]), default=0)
        rows.append(LevelErrors(n, 1.0 / n, tau, eu, eG, eD, eth, iters))
    return ConvergenceTable(case.name, study, rows)


# -- weak-strong experiment ---------------------------------------------------


def _theta_perturbation(points):
    x, y = _xy(points)
    return np.cos(PI * x) * np.cos(PI * y)


@dataclass
class WsuResult:
    eps: float
    times: np.ndarray
    energies: np.ndarray
    C_est: float
    uniqueness_violation: bool
    bound_holds: bool
    min_density: float = 0.0

    @property
    def E0(self):
        return float(self.energies[0])


def run_wsu_experiment(config, eps, scenario="decay", reference=None, theta_scale=1.0):
    """Relative energy between a reference run and a run from perturbed data.

    The perturbed run starts from ``u0 + eps du`` and ``theta0 + eps dtheta``
    with ``du`` the curl of ``sin^2(2 pi x) sin^2(pi y)`` (divergence free,
    zero on the boundary) and ``dtheta = theta_scale cos(pi x) cos(pi y)``. The reference
    is the unperturbed discrete run on the same mesh and time grid, unless a
    precomputed ``reference`` trajectory is passed.
    """
    if eps < 0:
        raise ValueError(f"perturbation amplitude must be non-negative, got {eps}")
    base = get_scenario(scenario) if isinstance(scenario, str) else scenario
    perturbed = Scenario(
        f"{base.name}+perturbation",
        lambda pts: base.u0(pts) + eps * cellular_stream_velocity(pts),
        lambda pts: base.theta0(pts) + eps * theta_scale * _theta_perturbation(pts),
        force=base.force,
        theta_source=base.theta_source,
        theta_min=0.0,
        description=f"{base.name} with perturbed data (eps={eps:g})",
    )
    ref = reference if reference is not None else run(config, base, record=False)
    pert = run(config, perturbed, disc=ref.disc, record=False)
    space = ref.disc.temperature
    energies, min_density = [], math.inf
    for p, r in zip(pert.states, ref.states):
        dens = relative_energy_density(p.u, p.theta, r.u, r.theta)
        min_density = min(min_density, float(dens.min()))
        energies.append(float(integrate(space, dens, DATA_DEGREE)))
    energies = np.array(energies)
    energies = np.maximum(energies, 0.0) if np.all(energies > -1e-14) else energies
    times = ref.times
    fit = gronwall_fit(times, energies, energies[0])
    bound = bool(np.all(energies <= energies[0] * np.exp(fit.C_est * times) * (1 + 1e-12) + 1e-300))
    return WsuResult(eps, times, energies, fit.C_est, fit.uniqueness_violation, bound, min_density)
