"""Lagrange finite element spaces on triangles.

Two families are provided: ``P1`` (scalar, temperature and pressure) and
``P2_vector`` (velocity, zero trace on the whole boundary). Scalar P2 dofs
are numbered vertices first, then edges, so the first ``n_vertices`` entries
of each velocity component are the vertex values. Vector dofs are blocked by
component: dof ``c * n_scalar + s`` is component ``c`` of scalar dof ``s``.

Callables passed to :func:`interpolate` and :func:`l2_project` take an array
of points with shape ``(..., 2)`` and return ``(...)`` (scalar) or
``(..., 2)`` (vector) values.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .mesh import quadrature_rule

FAMILIES = ("P1", "P2_vector")
_ALIASES = {"P1": "P1", "P1_scalar": "P1", "P2_vector": "P2_vector", "P2vec": "P2_vector"}

#: quadrature degree used for every form (exact for P2 x P2 x grad P2 integrands)
FORM_DEGREE = 6
#: quadrature degree used when integrating arbitrary callables
DATA_DEGREE = 8


def p1_basis(bary):
    """Values (nq, 3) and reference gradients (nq, 3, 2) of the P1 basis."""
    bary = np.asarray(bary)
    grad = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    return bary.copy(), np.broadcast_to(grad, (len(bary), 3, 2)).copy()


def p2_basis(bary):
    """Values (nq, 6) and reference gradients (nq, 6, 2) of the P2 basis.

    Local order: three vertex functions, then edge functions on (0,1), (1,2), (2,0).
    """
    lam = np.asarray(bary)
    dl = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    nq = len(lam)
    phi = np.empty((nq, 6))
    grad = np.empty((nq, 6, 2))
    for i in range(3):
        phi[:, i] = lam[:, i] * (2.0 * lam[:, i] - 1.0)
        grad[:, i] = (4.0 * lam[:, i] - 1.0)[:, None] * dl[i]
    for k, (i, j) in enumerate([(0, 1), (1, 2), (2, 0)]):
        phi[:, 3 + k] = 4.0 * lam[:, i] * lam[:, j]
        grad[:, 3 + k] = 4.0 * (lam[:, j][:, None] * dl[i] + lam[:, i][:, None] * dl[j])
    return phi, grad


class FunctionSpace:
    """Conforming Lagrange space on a mesh.

    Use :func:`build_space` to construct one.
    """

    def __init__(self, mesh, family):
        if family not in _ALIASES:
            raise ValueError(f"unknown element family {family!r}; expected one of {FAMILIES}")
        family = _ALIASES[family]
        self.mesh = mesh
        self.family = family
        if family == "P1":
            self.ncomp = 1
            self.degree = 1
            self.n_scalar = mesh.n_vertices
            cell_dofs = mesh.triangles
            nodes = mesh.vertices
            dirichlet = np.empty(0, dtype=np.int64)
        else:
            self.ncomp = 2
            self.degree = 2
            self.n_scalar = mesh.n_vertices + mesh.n_edges
            cell_dofs = np.hstack([mesh.triangles, mesh.triangle_edges + mesh.n_vertices])
            mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
            nodes = np.vstack([mesh.vertices, mids])
            bnd = np.concatenate(
                [mesh.boundary_vertices, mesh.boundary_edges[:, 0] + mesh.n_vertices]
            )
            bnd = np.unique(bnd)
            dirichlet = np.concatenate([bnd, bnd + self.n_scalar])
        self.cell_dofs = np.ascontiguousarray(cell_dofs, dtype=np.int64)
        self.nodes = np.ascontiguousarray(nodes)
        self.dirichlet_dofs = dirichlet
        self.dof_count = self.ncomp * self.n_scalar
        free = np.ones(self.dof_count, dtype=bool)
        free[dirichlet] = False
        self.free_dofs = np.flatnonzero(free)
        for arr in (self.cell_dofs, self.nodes, self.dirichlet_dofs, self.free_dofs):
            arr.setflags(write=False)
        self._tab = {}
        self._mass = {}

    def __repr__(self):
        return f"FunctionSpace({self.family}, dofs={self.dof_count})"

    @property
    def n_local(self):
        return self.cell_dofs.shape[1]

    def tabulate(self, degree=FORM_DEGREE):
        """Basis data for the quadrature rule of ``degree``.

        Returns ``(rule, phi, dphi, wdet)`` with ``phi`` (nq, nloc), physical
        gradients ``dphi`` (nt, nq, nloc, 2) and physical weights ``wdet`` (nt, nq).
        """
        if degree not in self._tab:
            rule = quadrature_rule(degree)
            basis = p1_basis if self.degree == 1 else p2_basis
            phi, gref = basis(rule.points)
            _, det, inv = self.mesh.jacobians()
            dphi = np.einsum("tji,qaj->tqai", inv, gref)
            wdet = np.abs(det)[:, None] * rule.weights[None, :]
            self._tab[degree] = (rule, phi, dphi, wdet)
        return self._tab[degree]

    def global_dofs(self):
        """Per-cell global dof indices including components, shape (nt, ncomp * nloc)."""
        return np.hstack([self.cell_dofs + c * self.n_scalar for c in range(self.ncomp)])

    def mass_matrix(self, lumped=False):
        """Consistent (or row-sum lumped) mass matrix over all dofs."""
        if lumped not in self._mass:
            _, phi, _, wdet = self.tabulate()
            local = np.einsum("tq,qa,qb->tab", wdet, phi, phi)
            scalar = assemble_matrix(self.cell_dofs, self.cell_dofs, local, self.n_scalar, self.n_scalar)
            if lumped:
                scalar = sp.diags(np.asarray(scalar.sum(axis=1)).ravel()).tocsr()
            self._mass[lumped] = sp.block_diag([scalar] * self.ncomp, format="csr")
        return self._mass[lumped]

    def zero(self):
        return DiscreteField(self, np.zeros(self.dof_count))


def build_space(mesh, family):
    """Build a ``P1`` or ``P2_vector`` space on ``mesh``."""
    return FunctionSpace(mesh, family)


def assemble_matrix(rows, cols, local, n_rows, n_cols):
    """Scatter local matrices (nt, nr, nc) into a CSR matrix."""
    nt, nr, nc = local.shape
    I = np.broadcast_to(rows[:, :, None], (nt, nr, nc)).ravel()
    J = np.broadcast_to(cols[:, None, :], (nt, nr, nc)).ravel()
    return sp.csr_matrix((local.ravel(), (I, J)), shape=(n_rows, n_cols))


def assemble_vector(rows, local, n):
    return np.bincount(rows.ravel(), weights=local.ravel(), minlength=n)


@dataclass(eq=False)
class DiscreteField:
    """Coefficient vector over a :class:`FunctionSpace`."""

    space: FunctionSpace
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.dof_count,):
            raise ValueError(
                f"coefficient vector has shape {self.coeffs.shape}, "
                f"expected ({self.space.dof_count},)"
            )

    def copy(self):
        return DiscreteField(self.space, self.coeffs.copy())

    def components(self):
        """Coefficients as (ncomp, n_scalar)."""
        return self.coeffs.reshape(self.space.ncomp, self.space.n_scalar)

    def _local(self):
        c = self.components()
        return c[:, self.space.cell_dofs]  # (ncomp, nt, nloc)

    def values(self, degree=FORM_DEGREE):
        """Values at quadrature points: (nt, nq) for scalars, (nt, nq, 2) for vectors."""
        _, phi, _, _ = self.space.tabulate(degree)
        v = np.moveaxis(self._local() @ phi.T, 0, -1)  # (nt, nq, ncomp)
        return v[..., 0] if self.space.ncomp == 1 else v

    def gradients(self, degree=FORM_DEGREE):
        """Gradients at quadrature points: (nt, nq, 2) scalar, (nt, nq, 2, 2) vector.

        For vectors ``G[..., i, j]`` is the derivative of component i along x_j.
        """
        _, _, dphi, _ = self.space.tabulate(degree)
        local = np.moveaxis(self._local(), 0, -1)[:, None]  # (nt, 1, nloc, ncomp)
        g = np.swapaxes(np.swapaxes(dphi, -1, -2) @ local, -1, -2)
        return g[..., 0, :] if self.space.ncomp == 1 else g

    def sym_gradients(self, degree=FORM_DEGREE):
        g = self.gradients(degree)
        return 0.5 * (g + np.swapaxes(g, -1, -2))

    def divergence(self, degree=FORM_DEGREE):
        g = self.gradients(degree)
        return g[..., 0, 0] + g[..., 1, 1]

    def integrate(self, degree=FORM_DEGREE):
        _, _, _, wdet = self.space.tabulate(degree)
        return np.einsum("tq,tq...->...", wdet, self.values(degree))


def integrate(space, values, degree=FORM_DEGREE):
    """Integrate quadrature-point values (nt, nq, ...) over the mesh of ``space``."""
    _, _, _, wdet = space.tabulate(degree)
    return np.einsum("tq,tq...->...", wdet, values)


def _eval_callable(space, f, degree):
    rule = quadrature_rule(degree)
    pts = space.mesh.map_points(rule.points)
    vals = np.asarray(f(pts), dtype=float)
    want = pts.shape[:2] + ((2,) if space.ncomp == 2 else ())
    return np.broadcast_to(vals, want)


def interpolate(space, f):
    """Nodal interpolant of the callable ``f``."""
    vals = np.asarray(f(space.nodes), dtype=float)
    if space.ncomp == 1:
        coeffs = np.broadcast_to(vals, (space.n_scalar,)).copy()
    else:
        coeffs = np.broadcast_to(vals, (space.n_scalar, 2)).T.ravel().copy()
    return DiscreteField(space, coeffs)


def load_vector(space, f, degree=DATA_DEGREE):
    """Vector of integrals of ``f`` against every basis function.

    ``f`` is a callable or an array of quadrature values for ``degree``.
    """
    _, phi, _, wdet = space.tabulate(degree)
    vals = _eval_callable(space, f, degree) if callable(f) else np.asarray(f)
    if space.ncomp == 1:
        local = np.einsum("tq,tq,qa->ta", wdet, vals, phi)
        return assemble_vector(space.cell_dofs, local, space.n_scalar)
    local = np.einsum("tq,tqc,qa->cta", wdet, vals, phi)
    return np.concatenate(
        [assemble_vector(space.cell_dofs, local[c], space.n_scalar) for c in range(2)]
    )


def l2_project(space, f, constrained=True):
    """L2-orthogonal projection of a callable or :class:`DiscreteField` onto ``space``.

    For the velocity space the projection is onto the subspace with zero
    boundary trace unless ``constrained`` is False.
    """
    if isinstance(f, DiscreteField):
        src = f
        deg = FORM_DEGREE
        if src.space.mesh is not space.mesh:
            raise ValueError("cannot project a field defined on a different mesh")
        rhs = load_vector(space, src.values(deg), deg)
    else:
        rhs = load_vector(space, f)
    M = space.mass_matrix().tocsc()
    coeffs = np.zeros(space.dof_count)
    idx = space.free_dofs if constrained else np.arange(space.dof_count)
    sub = M[idx][:, idx].tocsc()
    try:
        lu = splu(sub)
    except RuntimeError as exc:
        raise np.linalg.LinAlgError(f"singular mass matrix: {exc}") from exc
    coeffs[idx] = lu.solve(rhs[idx])
    return DiscreteField(space, coeffs)


NORM_KINDS = ("L2", "H1_semi", "Linf_nodal", "Lp", "Dsym", "W1p")


def norm(field, kind="L2", p=None, degree=DATA_DEGREE):
    """Norm of a discrete field evaluated by quadrature.

    ``kind`` is one of ``L2``, ``H1_semi``, ``Linf_nodal``, ``Lp`` (needs ``p``),
    ``Dsym`` (L2 norm of the symmetric gradient) or ``W1p`` (needs ``p``).
    Pointwise magnitudes use the Euclidean / Frobenius norm.
    """
    if kind == "Linf_nodal":
        return float(np.max(np.abs(field.coeffs), initial=0.0))
    if kind in ("Lp", "W1p"):
        if p is None or not 1 <= p < np.inf:
            raise ValueError(f"{kind} norm needs a finite exponent p >= 1, got {p}")
    space = field.space
    if kind == "L2":
        return _lp(space, _magnitude(field.values(degree)), 2.0, degree)
    if kind == "Lp":
        return _lp(space, _magnitude(field.values(degree)), p, degree)
    if kind == "H1_semi":
        return _lp(space, _magnitude(field.gradients(degree)), 2.0, degree)
    if kind == "Dsym":
        if space.ncomp != 2:
            raise ValueError("Dsym norm is defined for vector fields only")
        return _lp(space, _magnitude(field.sym_gradients(degree)), 2.0, degree)
    if kind == "W1p":
        a = _lp(space, _magnitude(field.values(degree)), p, degree)
        b = _lp(space, _magnitude(field.gradients(degree)), p, degree)
        return float((a**p + b**p) ** (1.0 / p))
    raise ValueError(f"unknown norm kind {kind!r}; expected one of {NORM_KINDS}")


def _magnitude(v):
    if v.ndim == 2:
        return np.abs(v)
    axes = tuple(range(2, v.ndim))
    return np.sqrt(np.sum(v * v, axis=axes))


def _lp(space, mag, p, degree):
    return float(integrate(space, mag**p, degree) ** (1.0 / p))


def divergence_matrix(v_space, m_space):
    """Sparse B with ``B[q, v] = -int q div v`` over all dofs."""
    _, psi, _, wdet = m_space.tabulate()
    _, _, dphi, _ = v_space.tabulate()
    blocks = []
    for c in range(2):
        local = -np.einsum("tq,qa,tqb->tab", wdet, psi, dphi[..., c])
        blocks.append(
            assemble_matrix(m_space.cell_dofs, v_space.cell_dofs, local, m_space.n_scalar, v_space.n_scalar)
        )
    return sp.hstack(blocks, format="csr")


def h1_matrix(v_space):
    """Gram matrix of the full H1 inner product on a vector space."""
    _, phi, dphi, wdet = v_space.tabulate()
    local = np.einsum("tqaj,tqbj,tq->tab", dphi, dphi, wdet)
    stiff = assemble_matrix(v_space.cell_dofs, v_space.cell_dofs, local, v_space.n_scalar, v_space.n_scalar)
    stiff = sp.block_diag([stiff] * v_space.ncomp, format="csr")
    return (stiff + v_space.mass_matrix()).tocsr()


def inf_sup_constant(v_space, m_space):
    """Discrete inf-sup constant of a velocity/pressure pair.

    Square root of the smallest nonzero eigenvalue of ``B A^{-1} B^T p = lam M p``
    with ``A`` the H1 Gram matrix on velocity fields vanishing on the boundary
    and ``M`` the pressure mass matrix. The constant pressure mode (eigenvalue
    zero) is excluded; remaining eigenvectors are mass-orthogonal to it, i.e.
    mean-zero.
    """
    if v_space.family != "P2_vector" or m_space.family != "P1":
        raise ValueError("inf_sup_constant expects a (P2_vector, P1) pair")
    if v_space.mesh is not m_space.mesh:
        raise ValueError("velocity and pressure spaces must share a mesh")
    free = v_space.free_dofs
    A = h1_matrix(v_space)[free][:, free].tocsc()
    B = divergence_matrix(v_space, m_space)[:, free]
    X = splu(A).solve(B.T.toarray())
    S = B @ X
    S = 0.5 * (S + S.T)
    M = m_space.mass_matrix().toarray()
    try:
        lam = scipy.linalg.eigh(S, M, eigvals_only=True)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"inf-sup eigenvalue computation failed: {exc}") from exc
    return float(np.sqrt(max(lam[1], 0.0)))
