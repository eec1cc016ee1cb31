"""Stress laws S(D, theta), heat conductivity, and sampled property checks.

All laws are generalized Newtonian, ``S = nu(|D|^2, theta) * D`` with the
Frobenius norm ``|D| = sqrt(D:D)``, so they map symmetric traceless tensors
to symmetric traceless tensors. Evaluators are vectorized: ``D`` has shape
``(..., 2, 2)`` and ``theta`` broadcasts against ``D.shape[:-2]``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import RootFindingError

MODEL_KINDS = ("carreau_yasuda", "power_law", "hb_regularized")
CONDUCTIVITY_KINDS = ("constant", "bounded_affine_sqrt")


@dataclass(frozen=True)
class Coefficient:
    """Temperature-dependent coefficient ``base + slope * t / (1 + t)``, t = max(theta, 0).

    Continuous on all of R, locally Lipschitz, and bounded between ``base`` and
    ``base + slope``.
    """

    base: float = 1.0
    slope: float = 0.0

    def __post_init__(self):
        if min(self.base, self.base + self.slope) <= 0:
            raise ValueError(f"coefficient must stay positive, got base={self.base}, slope={self.slope}")

    def __call__(self, theta):
        t = np.maximum(theta, 0.0)
        return self.base + self.slope * t / (1.0 + t)

    def derivative(self, theta):
        t = np.maximum(theta, 0.0)
        return np.where(np.asarray(theta) > 0, self.slope / (1.0 + t) ** 2, 0.0)

    @property
    def bounds(self):
        return min(self.base, self.base + self.slope), max(self.base, self.base + self.slope)

    @property
    def is_constant(self):
        return self.slope == 0.0


@dataclass(frozen=True)
class ConstitutiveModel:
    """Parameters of a stress law.

    ``carreau_yasuda``: ``S = alpha D + beta (1 + gamma |D|^2)^((r-2)/2) D``.
    ``power_law``: ``S = K |D|^(r-2) D``.
    ``hb_regularized``: Herschel-Bulkley with yield stress ``tau_y`` and
    consistency ``K``, regularized by ``eps_reg`` (see :func:`hb_regularized_solve`).
    """

    kind: str = "carreau_yasuda"
    r: float = 2.0
    alpha: Coefficient = field(default_factory=Coefficient)
    beta: Coefficient = field(default_factory=Coefficient)
    gamma: Coefficient = field(default_factory=Coefficient)
    K: float = 1.0
    tau_y: float = 0.0
    eps_reg: float = 0.1

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")
        # 2d/(d+2) = 1 for d = 2
        if not self.r > 1.0:
            raise ValueError(f"r must exceed 1 in two dimensions, got {self.r}")
        if not self.K > 0:
            raise ValueError(f"K must be positive, got {self.K}")
        if self.tau_y < 0:
            raise ValueError(f"tau_y must be non-negative, got {self.tau_y}")
        if not 0.0 < self.eps_reg < 1.0:
            raise ValueError(f"eps_reg must lie in (0, 1), got {self.eps_reg}")

    @property
    def r_conj(self):
        return self.r / (self.r - 1.0)

    @property
    def theta_dependent(self):
        if self.kind != "carreau_yasuda":
            return False
        return not (self.alpha.is_constant and self.beta.is_constant and self.gamma.is_constant)


def newtonian(viscosity=1.0):
    """Linear law ``S = viscosity * D``."""
    return ConstitutiveModel(kind="power_law", r=2.0, K=viscosity)


def frobenius2(D):
    return np.sum(D * D, axis=(-2, -1))


def _check_theta(theta):
    if np.any(np.asarray(theta) <= 0):
        raise ValueError("temperature must be positive where the stress is evaluated")


def viscosity(model, z, theta):
    """Effective viscosity as a function of ``z = |D|^2`` and temperature.

    Power law with ``r < 2`` returns ``inf`` at ``z = 0``.
    """
    z = np.asarray(z, dtype=float)
    if model.kind == "carreau_yasuda":
        return model.alpha(theta) + model.beta(theta) * (1.0 + model.gamma(theta) * z) ** (
            (model.r - 2.0) / 2.0
        )
    if model.kind == "power_law":
        if model.r == 2.0:
            return np.full(np.broadcast(z, theta).shape, model.K)
        with np.errstate(divide="ignore"):
            return model.K * z ** ((model.r - 2.0) / 2.0)
    d = np.sqrt(z)
    s = _hb_scalar(model, d)
    with np.errstate(divide="ignore", invalid="ignore"):
        nu = np.where(d > 0, s / np.where(d > 0, d, 1.0), 1.0 / model.eps_reg)
    return np.broadcast_to(nu, np.broadcast(z, theta).shape).copy()


def viscosity_derivatives(model, z, theta):
    """``(nu, dnu/dz, dnu/dtheta)`` for the Carreau-Yasuda and power laws."""
    z = np.asarray(z, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if model.kind == "carreau_yasuda":
        e = (model.r - 2.0) / 2.0
        a, b, g = model.alpha(theta), model.beta(theta), model.gamma(theta)
        base = 1.0 + g * z
        nu = a + b * base**e
        dz = b * e * base ** (e - 1.0) * g
        dth = (
            model.alpha.derivative(theta)
            + model.beta.derivative(theta) * base**e
            + b * e * base ** (e - 1.0) * z * model.gamma.derivative(theta)
        )
        return nu, dz, dth
    if model.kind == "power_law":
        e = (model.r - 2.0) / 2.0
        nu = model.K * z**e
        dz = model.K * e * z ** (e - 1.0) if e != 0 else np.zeros_like(z)
        return nu, dz, np.zeros(np.broadcast(z, theta).shape)
    raise ValueError("viscosity derivatives are available for carreau_yasuda and power_law only")


def effective_viscosity(model, D, theta):
    """Scalar ``nu`` with ``stress(model, D, theta) == nu * D``."""
    _check_theta(theta)
    return viscosity(model, frobenius2(np.asarray(D, dtype=float)), theta)


def stress(model, D, theta):
    """Evaluate ``S(D, theta)`` for symmetric traceless ``D``."""
    D = np.asarray(D, dtype=float)
    _check_theta(theta)
    if model.kind == "hb_regularized":
        return hb_regularized_solve(model, D, theta)
    z = frobenius2(D)
    nu = viscosity(model, z, theta)
    if model.kind == "power_law" and model.r < 2.0:
        nu = np.where(z > 0, nu, 0.0)  # removable singularity: S(0) = 0
    return nu[..., None, None] * D


def _hb_scalar(model, d, tol=1e-12, maxiter=100):
    """Stress magnitude ``s(|D|)`` of the regularized Herschel-Bulkley law.

    With ``a = s - eps d`` and ``b = d - eps s`` the regularized implicit
    relation reduces to ``b = 0`` while ``a <= tau_y`` (rigid branch,
    ``s = d / eps``) and to ``a = tau_y + K b^(r-1)`` otherwise.
    """
    shape = np.shape(d)
    d = np.atleast_1d(np.asarray(d, dtype=float)).copy()
    eps, ty, K, r = model.eps_reg, model.tau_y, model.K, model.r
    s = d / eps
    flowing = d * (1.0 - eps * eps) > eps * ty
    if not np.any(flowing):
        return s.reshape(shape)
    df = d[flowing]
    lo = eps * df + ty
    hi = df / eps
    x = np.clip(ty + K * df ** (r - 1.0), lo, hi)

    def phi(x):
        b = np.maximum(df - eps * x, 0.0)
        return x - eps * df - ty - K * b ** (r - 1.0), b

    for _ in range(maxiter):
        f, b = phi(x)
        scale = np.maximum(1.0, x)
        if np.all(np.abs(f) <= tol * scale):
            break
        lo = np.where(f < 0, x, lo)
        hi = np.where(f > 0, x, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            dphi = 1.0 + K * eps * (r - 1.0) * b ** (r - 2.0)
            newton = x - f / dphi
        inside = np.isfinite(newton) & (newton > lo) & (newton < hi)
        x = np.where(inside, newton, 0.5 * (lo + hi))
    else:
        f, _ = phi(x)
        if not np.all(np.abs(f) <= tol * np.maximum(1.0, x)):
            raise RootFindingError(
                f"regularized Herschel-Bulkley solve did not converge in {maxiter} iterations "
                f"(max residual {np.abs(f).max():.3e})"
            )
    s[flowing] = x
    return s.reshape(shape)


def hb_regularized_solve(model, D, theta=1.0):
    """Stress of the regularized Herschel-Bulkley law, ``S = s(|D|) D / |D|``.

    ``s`` solves the scalar form of ``G(S - eps D, D - eps S) = 0`` with
    ``G(S, D) = (|S| - tau_y)^+ S - K |D|^(r-2) (tau_y + (|S| - tau_y)^+) D``,
    by safeguarded Newton with bisection fallback. ``S = 0`` at ``D = 0``.
    """
    D = np.asarray(D, dtype=float)
    d = np.sqrt(frobenius2(D))
    s = _hb_scalar(model, d).reshape(d.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(d > 0, s / np.where(d > 0, d, 1.0), 0.0)
    return factor[..., None, None] * D


@dataclass(frozen=True)
class ConductivityLaw:
    """Heat conductivity ``kappa(theta)``.

    ``constant``: ``c1``. ``bounded_affine_sqrt``:
    ``c1 + c2 * min(sqrt(max(theta, 0)), cap)``.
    """

    kind: str = "constant"
    c1: float = 1.0
    c2: float = 1.0
    cap: float = 1e3

    def __post_init__(self):
        if self.kind not in CONDUCTIVITY_KINDS:
            raise ValueError(f"unknown conductivity kind {self.kind!r}; expected one of {CONDUCTIVITY_KINDS}")
        if not (self.c1 > 0 and self.c2 > 0 and self.cap > 0):
            raise ValueError("conductivity constants c1, c2 and cap must be positive")

    def __call__(self, theta):
        return conductivity(self, theta)

    def derivative(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.kind == "constant":
            return np.zeros_like(theta)
        root = np.sqrt(np.maximum(theta, 0.0))
        active = (theta > 0) & (root < self.cap)
        with np.errstate(divide="ignore"):
            return np.where(active, self.c2 / (2.0 * np.where(active, root, 1.0)), 0.0)

    @property
    def upper_bound(self):
        """Global upper bound (the effective ``c2`` of the bounded regime)."""
        return self.c1 if self.kind == "constant" else self.c1 + self.c2 * self.cap


def conductivity(law, theta):
    theta = np.asarray(theta, dtype=float)
    if law.kind == "constant":
        return np.full(theta.shape, law.c1)
    return law.c1 + law.c2 * np.minimum(np.sqrt(np.maximum(theta, 0.0)), law.cap)


# -- sampled property checks -------------------------------------------------


def random_traceless(rng, n, log_scale=(-2.0, 2.0)):
    """``n`` random symmetric traceless 2x2 tensors with log-uniform magnitudes."""
    a = rng.standard_normal((n, 2))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    mag = 10.0 ** rng.uniform(*log_scale, size=n) / np.sqrt(2.0)
    a *= mag[:, None]
    D = np.empty((n, 2, 2))
    D[:, 0, 0] = a[:, 0]
    D[:, 1, 1] = -a[:, 0]
    D[:, 0, 1] = D[:, 1, 0] = a[:, 1]
    return D


@dataclass(frozen=True)
class MonotonicityReport:
    seed: int
    n_samples: int
    min_pairing: float
    strong_mono_constant_est: float
    max_trace: float


def check_monotonicity(model, n_samples=10_000, seed=0, theta_range=(0.1, 10.0), log_scale=(-2.0, 2.0)):
    """Sample ``(S(t1, s) - S(t2, s)) : (t1 - t2)`` over random pairs.

    Returns the minimum pairing, the estimate
    ``min pairing / (|S1 - S2|^2 + |t1 - t2|^2)`` of the strong monotonicity
    constant, and the largest trace of a computed stress.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    t1 = random_traceless(rng, n_samples, log_scale)
    t2 = random_traceless(rng, n_samples, log_scale)
    s = rng.uniform(*theta_range, size=n_samples)
    S1, S2 = stress(model, t1, s), stress(model, t2, s)
    dS, dt = S1 - S2, t1 - t2
    pairing = np.sum(dS * dt, axis=(1, 2))
    denom = frobenius2(dS) + frobenius2(dt)
    ok = denom > 0
    c = float(np.min(pairing[ok] / denom[ok])) if np.any(ok) else 0.0
    trace = np.abs(np.concatenate([np.trace(S1, axis1=1, axis2=2), np.trace(S2, axis1=1, axis2=2)]))
    return MonotonicityReport(seed, n_samples, float(pairing.min()), c, float(trace.max()))


@dataclass(frozen=True)
class GrowthCoercivityReport:
    seed: int
    n_samples: int
    growth_c_est: float
    coercivity_c_est: float
    offset_g: float


def check_growth_coercivity(model, n_samples=10_000, seed=0, offset_g=1.0, theta_range=(0.1, 10.0), log_scale=(-2.0, 2.0)):
    """Estimate the growth and coercivity constants over random samples.

    ``growth_c_est`` is the smallest ``c`` with ``|S| <= c (|t|^(r-1) + 1)``;
    ``coercivity_c_est`` the largest ``c`` with
    ``S : t >= -g + c (|S|^r' + |t|^r)`` for the constant offset ``g``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    t = random_traceless(rng, n_samples, log_scale)
    s = rng.uniform(*theta_range, size=n_samples)
    S = stress(model, t, s)
    nt = np.sqrt(frobenius2(t))
    nS = np.sqrt(frobenius2(S))
    r, rc = model.r, model.r_conj
    growth = float(np.max(nS / (nt ** (r - 1.0) + 1.0)))
    coerc = float(np.min((np.sum(S * t, axis=(1, 2)) + offset_g) / (nS**rc + nt**r)))
    return GrowthCoercivityReport(seed, n_samples, growth, coerc, offset_g)


@dataclass(frozen=True)
class LipschitzReport:
    seed: int
    n_samples: int
    C_est: float


def check_theta_lipschitz(model, delta=0.1, R=10.0, n_samples=10_000, seed=0):
    """Estimate ``C`` with ``|S(t, a) - S(t, b)| <= C |a - b|`` on ``[delta, 1/delta]``, ``|t| <= R``."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if not R > 0:
        raise ValueError("R must be positive")
    rng = np.random.default_rng(seed)
    t = random_traceless(rng, n_samples, (-3.0, 0.0))
    t *= R  # log-uniform magnitudes in [R/1000, R]
    a = rng.uniform(delta, 1.0 / delta, size=n_samples)
    b = rng.uniform(delta, 1.0 / delta, size=n_samples)
    dS = np.sqrt(frobenius2(stress(model, t, a) - stress(model, t, b)))
    gap = np.abs(a - b)
    ok = gap > 0
    C = float(np.max(dS[ok] / gap[ok])) if np.any(ok) else 0.0
    return LipschitzReport(seed, n_samples, C)


@dataclass(frozen=True)
class ConductivityReport:
    seed: int
    n_samples: int
    min_value: float
    lower_ok: bool
    upper_ok: bool


def check_conductivity_bounds(law, n_samples=10_000, seed=0, theta_range=(0.01, 100.0)):
    """Sample ``c1 <= kappa(theta) <= c2 (sqrt(theta) + 1)`` (the constant law uses ``kappa = c1``)."""
    rng = np.random.default_rng(seed)
    theta = 10.0 ** rng.uniform(np.log10(theta_range[0]), np.log10(theta_range[1]), size=n_samples)
    k = conductivity(law, theta)
    upper = law.c1 if law.kind == "constant" else law.c2 * (np.sqrt(theta) + 1.0)
    return ConductivityReport(
        seed,
        n_samples,
        float(k.min()),
        bool(np.all(k >= law.c1)),
        bool(np.all(k <= upper * (1 + 1e-15))),
    )
