"""Triangulations of rectangles/polygons and quadrature on triangles.

Meshes are plain containers of numpy arrays; every array is made read-only at
construction so a mesh can be shared freely between spaces and threads.
"""

from dataclasses import dataclass, field
from functools import lru_cache
import math

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .errors import ConfigError

BOUNDARY_TAG = 1

# local edge k of a triangle joins local vertices _LOCAL_EDGES[k]
_LOCAL_EDGES = np.array([[0, 1], [1, 2], [2, 0]])


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation of a polygonal domain.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counter-clockwise
    edges : (ne, 2) int array of unique edges (sorted vertex pairs)
    triangle_edges : (nt, 3) int array; local edge k joins local vertices (k, k+1)
    boundary_edges : (nb, 2) int array of edge indices and their tag
    h_max : float
    level : int
    """

    vertices: np.ndarray
    triangles: np.ndarray
    level: int = 0
    edges: np.ndarray = field(init=False)
    triangle_edges: np.ndarray = field(init=False)
    boundary_edges: np.ndarray = field(init=False)
    h_max: float = field(init=False)

    def __post_init__(self):
        vertices = np.asarray(self.vertices, dtype=float)
        triangles = np.asarray(self.triangles, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise ValueError("vertices must have shape (nv, 2)")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise ValueError("triangles must have shape (nt, 3)")
        if triangles.size and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise ValueError("triangle vertex index out of range")
        area = _signed_areas(vertices, triangles)
        if np.any(area <= 0.0):
            raise ValueError("triangles must have positive signed area")

        pairs = np.sort(triangles[:, _LOCAL_EDGES].reshape(-1, 2), axis=1)
        edges, inverse, counts = np.unique(pairs, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        if counts.max(initial=0) > 2:
            raise ValueError("non-manifold mesh: an edge is shared by more than two triangles")
        boundary = np.flatnonzero(counts == 1)

        object.__setattr__(self, "vertices", _frozen(vertices, float))
        object.__setattr__(self, "triangles", _frozen(triangles, np.int64))
        object.__setattr__(self, "edges", _frozen(edges, np.int64))
        object.__setattr__(self, "triangle_edges", _frozen(inverse.reshape(-1, 3), np.int64))
        object.__setattr__(
            self,
            "boundary_edges",
            _frozen(np.column_stack([boundary, np.full(len(boundary), BOUNDARY_TAG)]), np.int64),
        )
        object.__setattr__(self, "h_max", float(_diameters(vertices, triangles).max()))

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def areas(self):
        return _signed_areas(self.vertices, self.triangles)

    @property
    def boundary_vertices(self):
        return np.unique(self.edges[self.boundary_edges[:, 0]])

    def jacobians(self):
        """Affine maps from the reference triangle: (J, det J, J^{-1}) per triangle."""
        p = self.vertices[self.triangles]
        jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        inv = np.empty_like(jac)
        inv[:, 0, 0] = jac[:, 1, 1] / det
        inv[:, 1, 1] = jac[:, 0, 0] / det
        inv[:, 0, 1] = -jac[:, 0, 1] / det
        inv[:, 1, 0] = -jac[:, 1, 0] / det
        return jac, det, inv

    def map_points(self, bary):
        """Physical coordinates of barycentric points, shape (nt, nq, 2)."""
        p = self.vertices[self.triangles]
        return np.einsum("qi,tid->tqd", np.asarray(bary), p)


def _signed_areas(vertices, triangles):
    p = vertices[triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def _diameters(vertices, triangles):
    p = vertices[triangles]
    lengths = np.linalg.norm(p[:, [1, 2, 0]] - p, axis=2)
    return lengths.max(axis=1)


def build_structured_mesh(nx, ny, width=1.0, height=1.0):
    """Rectangle [0, width] x [0, height] split into 2*nx*ny right triangles.

    Every cell is cut along its lower-left to upper-right diagonal.
    """
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ValueError(f"nx and ny must be positive integers, got {nx}, {ny}")
    if not (width > 0 and height > 0):
        raise ValueError(f"width and height must be positive, got {width}, {height}")
    nx, ny = int(nx), int(ny)
    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    v00 = (j * (nx + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * nx * ny, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper
    return Mesh(vertices, triangles)


def unit_square_mesh(level):
    """Structured unit-square mesh with 2**level cells per side."""
    if level < 0:
        raise ValueError("level must be >= 0")
    n = 2 ** int(level)
    return build_structured_mesh(n, n)


def refine_uniform(mesh):
    """Split each triangle into four congruent children through edge midpoints."""
    nv = mesh.n_vertices
    midpoints = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    vertices = np.vstack([mesh.vertices, midpoints])
    t = mesh.triangles
    m = mesh.triangle_edges + nv  # m[:, k] is the midpoint of local edge (k, k+1)
    children = np.concatenate(
        [
            np.column_stack([t[:, 0], m[:, 0], m[:, 2]]),
            np.column_stack([m[:, 0], t[:, 1], m[:, 1]]),
            np.column_stack([m[:, 2], m[:, 1], t[:, 2]]),
            np.column_stack([m[:, 0], m[:, 1], m[:, 2]]),
        ]
    )
    return Mesh(vertices, children, level=mesh.level + 1)


def read_mesh(path):
    """Read a plain-text mesh: ``NV NT``, NV lines ``x y``, NT lines ``i j k`` (0-based).

    Clockwise triangles are reoriented.
    """
    with open(path) as fh:
        tokens = fh.read().split()
    try:
        nv, nt = int(tokens[0]), int(tokens[1])
        data = tokens[2:]
        if len(data) != 2 * nv + 3 * nt:
            raise ValueError(f"expected {2 * nv + 3 * nt} numbers after header, found {len(data)}")
        vertices = np.array(data[: 2 * nv], dtype=float).reshape(nv, 2)
        triangles = np.array(data[2 * nv :], dtype=np.int64).reshape(nt, 3)
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"malformed mesh file {path}: {exc}") from exc
    flip = _signed_areas(vertices, triangles) < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    return Mesh(vertices, triangles)


@dataclass(frozen=True)
class QualityReport:
    min_angle: float
    max_angle: float
    shape_regularity: float
    is_acute: bool


def triangle_angles(mesh):
    """Interior angles in degrees, shape (nt, 3); column k is the angle at local vertex k."""
    p = mesh.vertices[mesh.triangles]
    angles = np.empty((mesh.n_triangles, 3))
    for k in range(3):
        a = p[:, (k + 1) % 3] - p[:, k]
        b = p[:, (k + 2) % 3] - p[:, k]
        cos = np.sum(a * b, axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        angles[:, k] = np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))
    return angles


def mesh_quality(mesh):
    """Angle extremes and the shape-regularity ratio max(diam / inradius)."""
    angles = triangle_angles(mesh)
    p = mesh.vertices[mesh.triangles]
    perimeter = np.linalg.norm(p[:, [1, 2, 0]] - p, axis=2).sum(axis=1)
    inradius = 2.0 * mesh.areas / perimeter
    ratio = _diameters(mesh.vertices, mesh.triangles) / inradius
    max_angle = float(angles.max())
    return QualityReport(
        min_angle=float(angles.min()),
        max_angle=max_angle,
        shape_regularity=float(ratio.max()),
        is_acute=max_angle <= 90.0 + 1e-12,
    )


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Rule on the reference triangle (0,0), (1,0), (0,1).

    ``points`` are barycentric coordinates (nq, 3); ``weights`` sum to 1/2.
    """

    points: np.ndarray
    weights: np.ndarray
    exact_degree: int

    @property
    def xy(self):
        return self.points[:, 1:]


@lru_cache(maxsize=None)
def quadrature_rule(degree):
    """Positive-weight rule exact for polynomials of total degree ``degree``.

    Degrees 1 and 2 use the centroid and edge-interior 3-point rules; higher
    degrees use a collapsed Gauss-Jacobi x Gauss-Legendre product rule.
    """
    if int(degree) != degree or not 1 <= degree <= 8:
        raise ValueError(f"unsupported quadrature degree {degree}; expected an integer in [1, 8]")
    degree = int(degree)
    if degree == 1:
        xy = np.array([[1.0 / 3.0, 1.0 / 3.0]])
        w = np.array([0.5])
    elif degree == 2:
        xy = np.array([[1.0 / 6.0, 1.0 / 6.0], [2.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 2.0 / 3.0]])
        w = np.full(3, 1.0 / 6.0)
    else:
        n = math.ceil((degree + 1) / 2)
        ts, tw = roots_jacobi(n, 1.0, 0.0)  # weight (1 - t) on [-1, 1]
        s = 0.5 * (1.0 + ts)
        ws = tw / 4.0
        gs, gw = roots_legendre(n)
        v = 0.5 * (1.0 + gs)
        wv = gw / 2.0
        S, V = np.meshgrid(s, v, indexing="ij")
        xy = np.column_stack([S.ravel(), ((1.0 - S) * V).ravel()])
        w = np.outer(ws, wv).ravel()
        degree = 2 * n - 1
    points = np.column_stack([1.0 - xy.sum(axis=1), xy])
    points.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(points=points, weights=w, exact_degree=degree)
