"""Skew-symmetric trilinear forms and the linearized momentum/temperature systems.

The convective forms are

    B(u, v, w) = 1/2 int [((u . grad) v) . w - ((u . grad) w) . v]
    C(u, t, e) = 1/2 int [(u . grad t) e - (u . grad e) t]

which vanish whenever the last two arguments coincide, for any transport
field. Each nonlinearity is linearized by lagging: the effective viscosity
and the conductivity use the previous iterate, the convection uses a lagged
transport field, and the penalty weight ``|u|^(r*-2) / k`` uses the lagged
velocity.
"""

from dataclasses import dataclass, field
import math

import numpy as np
import scipy.sparse as sp

from .constitutive import conductivity, frobenius2, stress, viscosity
from .spaces import (
    FORM_DEGREE,
    DiscreteField,
    FunctionSpace,
    assemble_matrix,
    assemble_vector,
    divergence_matrix,
    load_vector,
)


class Discretization:
    """Taylor-Hood velocity/pressure pair plus a P1 temperature space on one mesh.

    The temperature space is the pressure space (same object), so discretely
    divergence-free velocities are orthogonal to ``div`` against temperatures.
    Matrices that do not depend on the iterate are cached.
    """

    def __init__(self, mesh):
        self.mesh = mesh
        self.velocity = FunctionSpace(mesh, "P2_vector")
        self.pressure = FunctionSpace(mesh, "P1")
        self.temperature = self.pressure
        V = self.velocity
        self.free = V.free_dofs
        self.n_free = len(self.free)
        self.reduced_index = np.full(V.dof_count, -1, dtype=np.int64)
        self.reduced_index[self.free] = np.arange(self.n_free)
        self.pinned_pressure = 0
        self.kept_pressure = np.arange(1, self.pressure.dof_count)
        self._div = None
        self._vmass = None

    def __repr__(self):
        return f"Discretization(nt={self.mesh.n_triangles}, velocity={self.velocity.dof_count}, pressure={self.pressure.dof_count})"

    @property
    def divergence(self):
        """``-int q div v`` over all pressure dofs and free velocity dofs."""
        if self._div is None:
            self._div = divergence_matrix(self.velocity, self.pressure)[:, self.free].tocsr()
        return self._div

    @property
    def velocity_mass(self):
        if self._vmass is None:
            self._vmass = self._reduce(self.velocity.mass_matrix())
        return self._vmass

    def _reduce(self, A):
        return A[self.free][:, self.free].tocsr()

    def vector_local_to_reduced(self, local):
        """Scatter vector-space local matrices (nt, 12, 12) onto free dofs."""
        dofs = self.reduced_index[self.velocity.global_dofs()]
        nt, n, _ = local.shape
        I = np.broadcast_to(dofs[:, :, None], (nt, n, n)).ravel()
        J = np.broadcast_to(dofs[:, None, :], (nt, n, n)).ravel()
        keep = (I >= 0) & (J >= 0)
        return sp.csr_matrix(
            (local.ravel()[keep], (I[keep], J[keep])), shape=(self.n_free, self.n_free)
        )

    def expand_velocity(self, reduced):
        full = np.zeros(self.velocity.dof_count)
        full[self.free] = reduced
        return full


@dataclass
class AssembledSystem:
    """Sparse linear system with named blocks kept for inspection.

    For the momentum system the unknown is ``[u_free, p_kept]``: velocity
    values at non-boundary dofs followed by all pressure dofs except the
    pinned one. ``layout`` records the sizes and index sets.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    layout: dict
    blocks: dict = field(default_factory=dict)

    def residual(self, x):
        return self.matrix @ x - self.rhs


def _values(field_or_callable, space, degree):
    if isinstance(field_or_callable, DiscreteField):
        return field_or_callable.values(degree)
    pts = space.mesh.map_points(space.tabulate(degree)[0].points)
    return np.asarray(field_or_callable(pts), dtype=float)


def _same_space(*fields):
    s = fields[0].space
    for f in fields[1:]:
        if f.space is not s:
            raise ValueError("fields must live on the same function space")


def trilinear_B(u_adv, v, w, branch="skew", degree=FORM_DEGREE):
    """Convective form for velocities.

    ``branch="skew"`` is the symmetrized form used by the solver;
    ``branch="standard"`` is ``-int ((u . grad) w) . v``, which coincides with
    the skew form when ``u`` is pointwise divergence free and ``v, w`` vanish
    on the boundary.
    """
    _same_space(v, w)
    if v.space.ncomp != 2:
        raise ValueError("trilinear_B expects velocity fields")
    if isinstance(u_adv, DiscreteField) and u_adv.space.mesh is not v.space.mesh:
        raise ValueError("transport field lives on a different mesh")
    u = _values(u_adv, v.space, degree)
    vv, ww = v.values(degree), w.values(degree)
    gv, gw = v.gradients(degree), w.gradients(degree)
    conv_v = np.einsum("tqj,tqij->tqi", u, gv)
    conv_w = np.einsum("tqj,tqij->tqi", u, gw)
    _, _, _, wdet = v.space.tabulate(degree)
    second = np.einsum("tq,tqi,tqi->", wdet, conv_w, vv)
    if branch == "standard":
        return float(-second)
    if branch != "skew":
        raise ValueError(f"unknown branch {branch!r}")
    first = np.einsum("tq,tqi,tqi->", wdet, conv_v, ww)
    return float(0.5 * (first - second))


def trilinear_C(u_adv, theta, eta, branch="skew", degree=FORM_DEGREE):
    """Convective form for temperatures (see :func:`trilinear_B`)."""
    _same_space(theta, eta)
    if theta.space.ncomp != 1:
        raise ValueError("trilinear_C expects scalar fields")
    if isinstance(u_adv, DiscreteField) and u_adv.space.mesh is not theta.space.mesh:
        raise ValueError("transport field lives on a different mesh")
    u = _values(u_adv, theta.space, degree)
    t, e = theta.values(degree), eta.values(degree)
    gt, ge = theta.gradients(degree), eta.gradients(degree)
    _, _, _, wdet = theta.space.tabulate(degree)
    second = np.einsum("tq,tqj,tqj,tq->", wdet, u, ge, t)
    if branch == "standard":
        return float(-second)
    if branch != "skew":
        raise ValueError(f"unknown branch {branch!r}")
    first = np.einsum("tq,tqj,tqj,tq->", wdet, u, gt, e)
    return float(0.5 * (first - second))


def _convection_local(space, adv, degree=FORM_DEGREE):
    _, phi, dphi, wdet = space.tabulate(degree)
    advg = (dphi @ adv[..., None])[..., 0]
    half = _batched_gram(0.5 * wdet[..., None] * phi, advg)
    return half - np.swapaxes(half, 1, 2)


def _vector_blocks(diag, offdiag=None):
    """Assemble (nt, 12, 12) local matrices from scalar (nt, 6, 6) blocks."""
    nt, n, _ = diag.shape
    local = np.zeros((nt, 2 * n, 2 * n))
    for c in range(2):
        local[:, c * n : (c + 1) * n, c * n : (c + 1) * n] = diag
    if offdiag is not None:
        for c in range(2):
            for d in range(2):
                local[:, c * n : (c + 1) * n, d * n : (d + 1) * n] += offdiag[c][d]
    return local


def viscous_local(space, nu, degree=FORM_DEGREE):
    """Local matrices of ``int nu D(u) : D(v)`` on a vector space."""
    _, _, G, wdet = space.tabulate(degree)
    wG = 0.5 * (wdet * nu)[..., None, None] * G
    lap = _batched_gram(wG, G)
    cross = [[_batched_gram(wG[..., d], G[..., c]) for d in range(2)] for c in range(2)]
    return _vector_blocks(lap, cross)


def _batched_gram(a, b):
    """``sum over quadrature (and trailing axes) of a[t, q, i, ...] b[t, q, j, ...]`` as (nt, ni, nj)."""
    nt, nq, n = a.shape[:3]
    a2 = np.moveaxis(a, 2, 1).reshape(nt, n, -1)
    b2 = np.moveaxis(b, 2, 1).reshape(nt, b.shape[2], -1)
    return a2 @ np.swapaxes(b2, 1, 2)


def _weighted_mass_local(space, weight, degree=FORM_DEGREE):
    _, phi, _, wdet = space.tabulate(degree)
    return _batched_gram((wdet * weight)[..., None] * phi, np.broadcast_to(phi, wdet.shape + phi.shape[1:]))


def _lagged_viscosity(model, u_lag, theta_lag, degree=FORM_DEGREE):
    D = u_lag.sym_gradients(degree)
    z = frobenius2(D)
    if model.kind == "power_law" and model.r < 2.0:
        z = np.maximum(z, 1e-14)  # Picard needs a finite viscosity where Du vanishes
    return viscosity(model, z, theta_lag.values(degree))


def _check_positive_nodes(theta, what):
    if np.any(theta.coeffs <= 0):
        raise ValueError(f"{what} has a non-positive nodal value (min {theta.coeffs.min():.3e})")


def assemble_momentum_system(
    disc, u_prev, u_lag, theta_lag, tau, load, model, k=math.inf, r_star=6.0
):
    """Linearized backward-Euler momentum system for ``(u, p)``.

    Parameters
    ----------
    disc : Discretization
    u_prev, u_lag : DiscreteField
        Velocity at the previous time level and the lagged iterate.
    theta_lag : DiscreteField
        Lagged temperature (positive at every node).
    tau : float
        Time step.
    load : callable, array or None
        Time-averaged body force: a callable of points, or a precomputed
        vector over all velocity dofs.
    model : ConstitutiveModel
    k, r_star : float
        Penalty parameter (``inf`` disables the term) and exponent.
    """
    if not tau > 0:
        raise ValueError(f"time step must be positive, got {tau}")
    if not k > 0:
        raise ValueError(f"penalty parameter k must be positive, got {k}")
    _check_positive_nodes(theta_lag, "lagged temperature")
    V = disc.velocity
    nu = _lagged_viscosity(model, u_lag, theta_lag)
    visc = disc.vector_local_to_reduced(viscous_local(V, nu))
    conv_scalar = _convection_local(V, u_lag.values())
    conv = disc.vector_local_to_reduced(_vector_blocks(conv_scalar))
    mass = disc.velocity_mass
    A = mass / tau + visc + conv
    blocks = {"mass": mass, "viscous": visc, "convection": conv}
    if math.isfinite(k):
        weight = np.sum(u_lag.values() ** 2, axis=-1) ** ((r_star - 2.0) / 2.0) / k
        pen = disc.vector_local_to_reduced(_vector_blocks(_weighted_mass_local(V, weight)))
        A = A + pen
        blocks["penalty"] = pen

    full_mass = V.mass_matrix()
    rhs_u = (full_mass @ u_prev.coeffs)[disc.free] / tau
    if load is not None:
        f = load if not callable(load) else load_vector(V, load)
        rhs_u = rhs_u + np.asarray(f)[disc.free]
    B = disc.divergence[disc.kept_pressure]
    blocks["divergence"] = B
    matrix = sp.bmat([[A, B.T], [B, None]], format="csr")
    rhs = np.concatenate([rhs_u, np.zeros(B.shape[0])])
    layout = {"n_u": disc.n_free, "n_p": B.shape[0], "free": disc.free, "kept_pressure": disc.kept_pressure}
    return AssembledSystem(matrix, rhs, layout, blocks)


def dissipation_density(u, theta, model, degree=FORM_DEGREE):
    """``S(Du, theta) : Du`` at quadrature points, shape (nt, nq)."""
    D = u.sym_gradients(degree)
    S = stress(model, D, theta.values(degree))
    return np.sum(S * D, axis=(-2, -1))


def assemble_temperature_system(
    disc, theta_prev, u_new, theta_lag, tau, law, model, lumped=False, source=None
):
    """Linearized backward-Euler temperature system.

    ``(1/tau) M theta + K(kappa(theta_lag)) theta + C(u_new) theta
    = (1/tau) M theta_prev + int S(Du_new, theta_lag) : Du_new psi [+ source]``.
    ``lumped`` replaces ``M`` with its row-sum diagonal.
    """
    if not tau > 0:
        raise ValueError(f"time step must be positive, got {tau}")
    _check_positive_nodes(theta_lag, "lagged temperature")
    T = disc.temperature
    _, phi, dphi, wdet = T.tabulate()
    kappa = conductivity(law, theta_lag.values())
    stiff_local = _batched_gram((wdet * kappa)[..., None, None] * dphi, dphi)
    conv_local = _convection_local(T, u_new.values())
    n = T.dof_count
    stiff = assemble_matrix(T.cell_dofs, T.cell_dofs, stiff_local, n, n)
    conv = assemble_matrix(T.cell_dofs, T.cell_dofs, conv_local, n, n)
    M = T.mass_matrix(lumped=lumped)
    matrix = (M / tau + stiff + conv).tocsr()
    dens = dissipation_density(u_new, theta_lag, model)
    diss = assemble_vector(T.cell_dofs, np.einsum("tq,tq,qa->ta", wdet, dens, phi), n)
    rhs = M @ theta_prev.coeffs / tau + diss
    if source is not None:
        rhs = rhs + (load_vector(T, source) if callable(source) else np.asarray(source))
    blocks = {"mass": M, "stiffness": stiff, "convection": conv, "dissipation": diss}
    return AssembledSystem(matrix, rhs, {"n": n}, blocks)
