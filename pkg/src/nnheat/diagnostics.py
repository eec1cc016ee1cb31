"""Energy, entropy and relative-energy diagnostics on discrete trajectories.

Quantities that appear in the discrete equations (dissipation, penalty) are
integrated with the same quadrature as the assembled forms so that the
discrete balances close to solver tolerance.
"""

from dataclasses import asdict, dataclass, fields
import math
from typing import Optional

import numpy as np

from .constitutive import conductivity, stress
from .forms import dissipation_density
from .spaces import DATA_DEGREE, FORM_DEGREE, DiscreteField, integrate

CSV_COLUMNS = (
    "t",
    "kinetic",
    "internal",
    "total",
    "dissipation",
    "penalty_dissipation",
    "entropy",
    "entropy_production",
    "min_theta",
    "energy_residual",
    "picard_iters",
    "picard_residual",
)


@dataclass
class DiagnosticsRecord:
    """Per-level summary. ``energy_residual`` is the signed residual of the
    discrete kinetic-energy identity for the step ending at ``t`` (0 for the
    initial state)."""

    t: float
    kinetic: float
    internal: float
    total: float
    dissipation: float
    penalty_dissipation: float
    entropy: float
    entropy_production: float
    min_theta: float
    energy_residual: float
    picard_iters: int
    picard_residual: float
    relative_energy: Optional[float] = None

    def row(self):
        return [getattr(self, c) for c in CSV_COLUMNS]

    def as_dict(self):
        return asdict(self)


def kinetic_energy(u):
    return 0.5 * float(u.coeffs @ (u.space.mass_matrix() @ u.coeffs))


def internal_energy(theta):
    return float(theta.integrate(FORM_DEGREE))


def dissipation(u, theta, model):
    """``int S(Du, theta) : Du``."""
    return float(integrate(u.space, dissipation_density(u, theta, model), FORM_DEGREE))


def penalty_dissipation(u, k, r_star):
    """``(1/k) ||u||_{L^r*}^{r*}``; zero when ``k`` is infinite."""
    if math.isinf(k):
        return 0.0
    mag2 = np.sum(u.values(FORM_DEGREE) ** 2, axis=-1)
    return float(integrate(u.space, mag2 ** (0.5 * r_star), FORM_DEGREE)) / k


def _check_positive(theta, what="temperature"):
    if np.any(theta.coeffs <= 0):
        raise ValueError(f"{what} must be positive at every node (min {theta.coeffs.min():.3e})")


def entropy(theta, psi=None):
    """``int psi log(theta)`` (``psi = 1`` by default)."""
    _check_positive(theta)
    vals = np.log(theta.values(DATA_DEGREE))
    if psi is not None:
        vals = vals * psi.values(DATA_DEGREE)
    return float(integrate(theta.space, vals, DATA_DEGREE))


def entropy_production_density(u, theta, model, law, degree=FORM_DEGREE):
    """``kappa |grad theta|^2 / theta^2 + S : Du / theta`` at quadrature points."""
    _check_positive(theta)
    th = theta.values(degree)
    g = theta.gradients(degree)
    heat = conductivity(law, th) * np.sum(g * g, axis=-1) / th**2
    return heat + dissipation_density(u, theta, model, degree) / th


def entropy_production(u, theta, model, law):
    d = entropy_production_density(u, theta, model, law)
    return float(integrate(theta.space, d, FORM_DEGREE))


def min_temperature(state):
    """Minimum nodal temperature (the true minimum of a P1 function)."""
    return float(state.theta.coeffs.min())


@dataclass(frozen=True)
class EnergyBalance:
    """Terms of the discrete kinetic-energy identity for one step.

    ``residual = kinetic_jump + increment + dissipation + penalty - work``
    where each term already carries the factor ``tau`` where applicable.
    """

    kinetic_jump: float
    increment: float
    dissipation: float
    penalty: float
    work: float

    @property
    def residual(self):
        return self.kinetic_jump + self.increment + self.dissipation + self.penalty - self.work

    @property
    def scale(self):
        return (
            abs(self.kinetic_jump) + self.increment + abs(self.dissipation) + abs(self.penalty) + abs(self.work)
        )

    @property
    def relative(self):
        s = self.scale
        return abs(self.residual) / s if s > 0 else 0.0


def energy_balance_residual(prev, cur, config, f_avg=None):
    """Split the discrete energy identity for the step ``prev -> cur`` into its terms.

    ``f_avg`` is the load vector over all velocity dofs; it defaults to the
    one stored on ``cur``.
    """
    tau = config.tau
    f_avg = cur.force if f_avg is None else f_avg
    du = DiscreteField(cur.u.space, cur.u.coeffs - prev.u.coeffs)
    work = tau * float(np.asarray(f_avg) @ cur.u.coeffs) if f_avg is not None else 0.0
    return EnergyBalance(
        kinetic_jump=kinetic_energy(cur.u) - kinetic_energy(prev.u),
        increment=kinetic_energy(du),
        dissipation=tau * dissipation(cur.u, cur.theta, config.model),
        penalty=tau * penalty_dissipation(cur.u, config.k, config.r_star),
        work=work,
    )


def internal_energy_residual(prev, cur, config, theta_source=None):
    """``int theta_j - int theta_{j-1} - tau int S:Du_j`` (minus the source work, if any)."""
    res = internal_energy(cur.theta) - internal_energy(prev.theta)
    res -= config.tau * dissipation(cur.u, cur.theta, config.model)
    if theta_source is not None:
        res -= config.tau * float(np.sum(theta_source))
    return res


def diagnostics_record(prev, cur, config, relative=None):
    """Diagnostics for ``cur``; ``prev`` is the previous level or ``None`` for t = 0."""
    kin = kinetic_energy(cur.u)
    internal = internal_energy(cur.theta)
    resid = 0.0 if prev is None else energy_balance_residual(prev, cur, config).residual
    return DiagnosticsRecord(
        t=float(cur.t),
        kinetic=kin,
        internal=internal,
        total=kin + internal,
        dissipation=dissipation(cur.u, cur.theta, config.model),
        penalty_dissipation=penalty_dissipation(cur.u, config.k, config.r_star),
        entropy=entropy(cur.theta),
        entropy_production=entropy_production(cur.u, cur.theta, config.model, config.law),
        min_theta=min_temperature(cur),
        energy_residual=resid,
        picard_iters=int(cur.picard_iters),
        picard_residual=float(cur.picard_residual),
        relative_energy=relative,
    )


def _window_indices(trajectory, window):
    n = len(trajectory.states)
    if window is None:
        return 0, n - 1
    a, b = window
    ia = int(round(a / trajectory.tau))
    ib = int(round(b / trajectory.tau))
    if abs(ia * trajectory.tau - a) > 1e-9 or abs(ib * trajectory.tau - b) > 1e-9:
        raise ValueError(f"window [{a}, {b}] is not on the time grid")
    if not 0 <= ia < ib < n:
        raise ValueError(f"window [{a}, {b}] is outside the trajectory")
    return ia, ib


def entropy_residual(trajectory, psi=None, window=None):
    """Discrete entropy-inequality margin over a time window.

    With ``s = log theta`` and ``q = -kappa grad theta`` this returns

        [int psi s]_{t_a}^{t_b} - sum_j tau ( int s_j u_j . grad psi
            - int kappa grad theta_j . grad psi / theta_j
            + int psi (kappa |grad theta_j|^2 / theta_j^2 + S_j : Du_j / theta_j) )

    for a time-independent test function ``psi >= 0`` in the temperature
    space (``None`` means ``psi = 1``). Positive values mean the inequality
    holds with margin.
    """
    ia, ib = _window_indices(trajectory, window)
    states = trajectory.states
    cfg = trajectory.config
    space = states[0].theta.space
    if psi is None:
        psi = DiscreteField(space, np.ones(space.dof_count))
    if np.any(psi.coeffs < 0):
        raise ValueError("test function must be non-negative at every node")
    if not np.any(psi.coeffs):
        return 0.0
    deg = FORM_DEGREE
    psi_v, psi_g = psi.values(deg), psi.gradients(deg)
    total = 0.0
    for s in states[ia + 1 : ib + 1]:
        _check_positive(s.theta)
        th = s.theta.values(deg)
        g = s.theta.gradients(deg)
        u = s.u.values(deg)
        kappa = conductivity(cfg.law, th)
        flux = np.log(th) * np.sum(u * psi_g, axis=-1) - kappa * np.sum(g * psi_g, axis=-1) / th
        prod = entropy_production_density(s.u, s.theta, cfg.model, cfg.law, deg) * psi_v
        total += trajectory.tau * float(integrate(space, flux + prod, deg))
    jump = entropy(states[ib].theta, psi) - entropy(states[ia].theta, psi)
    return float(jump - total)


def _ref_values(ref, space, degree):
    if isinstance(ref, DiscreteField):
        return ref.values(degree)
    pts = space.mesh.map_points(space.tabulate(degree)[0].points)
    return np.asarray(ref(pts), dtype=float)


def relative_energy_density(u, theta, ref_u, ref_theta, degree=DATA_DEGREE):
    """``1/2 |u - u_ref|^2 + (theta - theta_ref) - theta_ref log(theta / theta_ref)``."""
    du = u.values(degree) - _ref_values(ref_u, u.space, degree)
    th = theta.values(degree)
    tr = _ref_values(ref_theta, theta.space, degree)
    if np.any(th <= 0) or np.any(tr <= 0):
        raise ValueError("relative energy needs positive temperatures")
    return 0.5 * np.sum(du * du, axis=-1) + (th - tr) - tr * np.log(th / tr)


def relative_energy(state, ref_u, ref_theta, degree=DATA_DEGREE):
    """Integral of :func:`relative_energy_density`; references may be fields or callables."""
    _check_positive(state.theta)
    d = relative_energy_density(state.u, state.theta, ref_u, ref_theta, degree)
    return float(integrate(state.theta.space, d, degree))


@dataclass(frozen=True)
class GronwallFit:
    C_est: float
    uniqueness_violation: bool = False


def gronwall_fit(times, values, E0):
    """Smallest ``C >= 0`` with ``values[j] <= E0 exp(C times[j])`` for all ``times[j] > 0``.

    With ``E0 = 0`` any positive value cannot be bounded; this is reported as
    a uniqueness violation with ``C_est = inf``.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if np.any(values < 0) or E0 < 0:
        raise ValueError("relative energies must be non-negative")
    mask = times > 0
    t, v = times[mask], values[mask]
    if E0 == 0:
        if np.any(v > 0):
            return GronwallFit(math.inf, True)
        return GronwallFit(0.0)
    with np.errstate(divide="ignore"):
        rates = np.log(v / E0) / t
    c = float(np.max(rates, initial=0.0))
    return GronwallFit(max(c, 0.0))


@dataclass(frozen=True)
class AprioriMonitor:
    """Bounds monitored along a trajectory (sums run over levels j >= 1)."""

    max_u_L2: float
    sum_u_W1r: float
    sum_S_Lrconj: float
    penalty_sum: float
    u_parabolic: float
    parabolic_exponent: float
    log_theta_L2H1: float
    max_log_theta_L2: float
    max_log_theta_L4: float

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def apriori_monitor(trajectory, r=None, k=None, r_star=None):
    """Evaluate the a-priori quantities of the scheme on a trajectory.

    The parabolic-embedding exponent is ``r (d + 2) / d = 2 r`` in two dimensions.
    """
    cfg = trajectory.config
    r = cfg.model.r if r is None else r
    k = cfg.k if k is None else k
    r_star = cfg.r_star if r_star is None else r_star
    rc = r / (r - 1.0)
    q = 2.0 * r
    tau = trajectory.tau
    deg = DATA_DEGREE
    states = trajectory.states
    space_u = states[0].u.space
    space_t = states[0].theta.space

    max_u = 0.0
    max_l2 = max_l4 = 0.0
    sum_w1r = sum_s = pen = par = log_h1 = 0.0
    for j, s in enumerate(states):
        uv = s.u.values(deg)
        mag = np.sqrt(np.sum(uv * uv, axis=-1))
        max_u = max(max_u, math.sqrt(integrate(space_u, mag**2, deg)))
        th = s.theta.values(deg)
        if np.any(th <= 0):
            raise ValueError("temperature must be positive for the entropy monitors")
        lg = np.log(th)
        max_l2 = max(max_l2, float(integrate(space_t, lg**2, deg)) ** 0.5)
        max_l4 = max(max_l4, float(integrate(space_t, lg**4, deg)) ** 0.25)
        if j == 0:
            continue
        G = s.u.gradients(deg)
        gmag = np.sqrt(np.sum(G * G, axis=(-2, -1)))
        sum_w1r += tau * float(integrate(space_u, mag**r + gmag**r, deg))
        S = stress(cfg.model, s.u.sym_gradients(deg), th)
        smag = np.sqrt(np.sum(S * S, axis=(-2, -1)))
        sum_s += tau * float(integrate(space_u, smag**rc, deg))
        if not math.isinf(k):
            pen += tau / k * float(integrate(space_u, mag**r_star, deg))
        par += tau * float(integrate(space_u, mag**q, deg))
        gl = s.theta.gradients(deg) / th[..., None]
        log_h1 += tau * float(integrate(space_t, lg**2 + np.sum(gl * gl, axis=-1), deg))
    return AprioriMonitor(
        max_u_L2=max_u,
        sum_u_W1r=sum_w1r,
        sum_S_Lrconj=sum_s,
        penalty_sum=pen,
        u_parabolic=par ** (1.0 / q),
        parabolic_exponent=q,
        log_theta_L2H1=math.sqrt(log_h1),
        max_log_theta_L2=max_l2,
        max_log_theta_L4=max_l4,
    )
