"""Writers for diagnostics tables (CSV) and fields (legacy ASCII VTK)."""

from pathlib import Path

import numpy as np

from .diagnostics import CSV_COLUMNS


def _fmt(value):
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return "%.17g" % value


def write_diagnostics_csv(trajectory, path):
    """One row per time level, 17 significant digits, LF line endings."""
    lines = [",".join(CSV_COLUMNS)]
    for rec in trajectory.diagnostics:
        lines.append(",".join(_fmt(v) for v in rec.row()))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_fields_vtk(state, path, title="nnheat fields"):
    """Legacy ASCII unstructured grid with velocity, temperature and pressure at vertices.

    The P2 velocity is sampled at the mesh vertices (its vertex dofs).
    """
    mesh = state.theta.space.mesh
    nv, nt = mesh.n_vertices, mesh.n_triangles
    uc = state.u.components()[:, :nv]
    out = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {nv} double",
    ]
    out += [f"{_fmt(x)} {_fmt(y)} 0" for x, y in mesh.vertices]
    out.append(f"CELLS {nt} {4 * nt}")
    out += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    out.append(f"CELL_TYPES {nt}")
    out += ["5"] * nt
    out.append(f"POINT_DATA {nv}")
    out.append("VECTORS velocity double")
    out += [f"{_fmt(a)} {_fmt(b)} 0" for a, b in uc.T]
    for name, field in (("temperature", state.theta), ("pressure", state.p)):
        out.append(f"SCALARS {name} double 1")
        out.append("LOOKUP_TABLE default")
        out += [_fmt(v) for v in field.coeffs]
    Path(path).write_text("\n".join(out) + "\n")
