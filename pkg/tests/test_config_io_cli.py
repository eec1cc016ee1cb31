import math

import numpy as np
import pytest

from nnheat.cli import EXIT_INPUT, EXIT_OK, EXIT_SOLVER, main
from nnheat.config import KNOWN_KEYS, parse_config, parse_text
from nnheat.diagnostics import CSV_COLUMNS
from nnheat.errors import ConfigError
from nnheat.io import write_diagnostics_csv, write_fields_vtk
from nnheat.spaces import interpolate
from nnheat.stepper import RunConfig, run

SMALL_TEXT = """\
# small decay run
mesh.nx = 4
model.kind = power_law
model.r = 2
model.K = 0.1
time.T = 0.02
time.tau = 0.01
solver.picard_tol = 1e-10
scenario.name = decay
output.vtk_every = 1
checks.n_samples = 200
"""


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(SMALL_TEXT)
    return path


def test_defaults():
    cfg = parse_text("")
    assert cfg.run.nx == cfg.run.ny == 16
    assert cfg.run.model.kind == "power_law" and cfg.run.model.r == 2.0
    assert cfg.run.law.kind == "constant"
    assert math.isinf(cfg.run.k)
    assert cfg.run.scenario == "decay"
    assert (cfg.seed, cfg.n_samples, cfg.theta_scale) == (0, 10_000, 1.0)


def test_full_parse():
    cfg = parse_text(
        """
        mesh.level = 3            # 8 x 8
        model.kind = carreau_yasuda
        model.r = 1.5
        model.alpha = 0.5
        model.alpha_slope = 0.25
        conductivity.kind = bounded_affine_sqrt
        conductivity.c2 = 2
        penalty.k = 100
        penalty.r_star = 7
        solver.mass_lumping = yes
        solver.damping = 0.5
        time.T = 0.1
        time.tau = 0.05
        checks.seed = 7
        wsu.theta_scale = 0.5
        """
    )
    run = cfg.run
    assert run.nx == 8
    assert run.model.alpha.base == 0.5 and run.model.alpha.slope == 0.25
    assert run.law.c2 == 2.0
    assert (run.k, run.r_star, run.mass_lumping, run.damping) == (100.0, 7.0, True, 0.5)
    assert run.n_steps == 2
    assert cfg.seed == 7 and cfg.theta_scale == 0.5
    assert cfg.values["model.r"] == 1.5


def test_inf_penalty_spelling():
    assert math.isinf(parse_text("penalty.k = inf").run.k)


@pytest.mark.parametrize(
    "text,match",
    [
        ("mesh.nx 4", "expected 'section.key = value'"),
        ("mesh.size = 4", "unknown key"),
        ("mesh.nx = 4\nmesh.nx = 8", "duplicate key"),
        ("mesh.nx = 4.5", "bad value"),
        ("solver.mass_lumping = maybe", "bad value"),
        ("time.T = 0.105", "integer"),
        ("model.kind = bingham", "model"),
        ("model.r = 1", "model"),
        ("conductivity.c1 = -1", "conductivity"),
        ("scenario.name = nowhere", "unknown"),
        ("mesh.level = 2\nmesh.nx = 4", "mesh.level"),
        ("mesh.level = -1", "mesh.level"),
        ("output.vtk_every = -1", "vtk_every"),
        ("checks.n_samples = 1", "n_samples"),
        ("model.kind = power_law\nmodel.r = 1.5\npenalty.r_star = 5.5", "r_star"),
        ("penalty.k = 0.5", "penalty.k"),
    ],
)
def test_rejections(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_text(text)


def test_error_carries_line_number():
    with pytest.raises(ConfigError, match=r"cfg:3: unknown key"):
        parse_text("mesh.nx = 4\n\nbogus.key = 1\n", "cfg")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        parse_config(tmp_path / "absent.cfg")


def test_known_keys_cover_sections():
    sections = {k.split(".")[0] for k in KNOWN_KEYS}
    assert sections == {"mesh", "model", "conductivity", "time", "penalty", "solver", "scenario", "output", "checks", "wsu"}


@pytest.fixture(scope="module")
def traj():
    return run(RunConfig(nx=4, T=0.02, tau=0.01, picard_tol=1e-10), "decay")


def test_csv_header_and_rows(traj, tmp_path):
    path = tmp_path / "d.csv"
    write_diagnostics_csv(traj, path)
    raw = path.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 1 + len(traj)
    first = lines[1].split(",")
    assert first[0] == "0" and first[CSV_COLUMNS.index("picard_iters")] == "0"
    last = dict(zip(CSV_COLUMNS, lines[-1].split(",")))
    rec = traj.diagnostics[-1]
    # 17 significant digits round-trip exactly
    assert float(last["kinetic"]) == rec.kinetic
    assert float(last["min_theta"]) == rec.min_theta
    assert int(last["picard_iters"]) == rec.picard_iters


def test_csv_is_deterministic(tmp_path):
    cfg = RunConfig(nx=4, T=0.02, tau=0.01, picard_tol=1e-10)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_diagnostics_csv(run(cfg, "decay"), a)
    write_diagnostics_csv(run(cfg, "decay"), b)
    assert a.read_bytes() == b.read_bytes()


def test_vtk_layout(traj, tmp_path):
    path = tmp_path / "f.vtk"
    s = traj.states[-1]
    write_fields_vtk(s, path)
    lines = path.read_text().splitlines()
    mesh = traj.disc.mesh
    nv, nt = mesh.n_vertices, mesh.n_triangles
    assert lines[0] == "# vtk DataFile Version 3.0"
    assert lines[2:5] == ["ASCII", "DATASET UNSTRUCTURED_GRID", f"POINTS {nv} double"]
    i = lines.index(f"CELLS {nt} {4 * nt}")
    assert all(l.startswith("3 ") for l in lines[i + 1 : i + 1 + nt])
    j = lines.index(f"CELL_TYPES {nt}")
    assert set(lines[j + 1 : j + 1 + nt]) == {"5"}
    assert lines[j + 1 + nt] == f"POINT_DATA {nv}"
    assert lines[j + 2 + nt] == "VECTORS velocity double"
    k = lines.index("SCALARS temperature double 1")
    assert lines[k + 1] == "LOOKUP_TABLE default"
    temps = np.array([float(v) for v in lines[k + 2 : k + 2 + nv]])
    np.testing.assert_array_equal(temps, s.theta.coeffs)
    assert "SCALARS pressure double 1" in lines


def test_vtk_velocity_is_vertex_values(traj, tmp_path):
    disc = traj.disc
    u = interpolate(disc.velocity, lambda p: np.stack([p[..., 0], 2 * p[..., 1]], axis=-1))
    s = traj.states[0]
    from nnheat.stepper import StepState

    path = tmp_path / "v.vtk"
    write_fields_vtk(StepState(0.0, u, s.p, s.theta), path)
    lines = path.read_text().splitlines()
    i = lines.index("VECTORS velocity double")
    nv = disc.mesh.n_vertices
    vel = np.array([[float(c) for c in l.split()] for l in lines[i + 1 : i + 1 + nv]])
    np.testing.assert_allclose(vel[:, :2], disc.mesh.vertices * [1, 2], atol=1e-15)
    assert np.all(vel[:, 2] == 0)


def test_cli_run(small_cfg, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", str(small_cfg), "--out", str(out)]) == EXIT_OK
    assert (out / "diagnostics.csv").read_text().splitlines()[0] == ",".join(CSV_COLUMNS)
    assert sorted(p.name for p in out.glob("*.vtk")) == ["fields_00000.vtk", "fields_00001.vtk", "fields_00002.vtk"]
    assert "final t=0.02" in capsys.readouterr().out


def test_cli_solver_failure(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text(SMALL_TEXT.replace("solver.picard_tol = 1e-10", "solver.picard_tol = 1e-15\nsolver.picard_max = 1"))
    assert main(["run", str(path), "--out", str(tmp_path)]) == EXIT_SOLVER
    assert "solver failure" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "/nonexistent/config.cfg"],
        ["frobnicate"],
        [],
        ["mms", "poiseuille"],
        ["mms", "rest_state", "--levels", "2"],
        ["infsup", "--levels", "0"],
        ["wsu", "/nonexistent.cfg", "--eps", "0.1"],
    ],
)
def test_cli_input_errors(argv, capsys):
    assert main(argv) == EXIT_INPUT


def test_cli_bad_config_value(tmp_path, capsys):
    path = tmp_path / "c.cfg"
    path.write_text("time.tau = -1\n")
    assert main(["run", str(path)]) == EXIT_INPUT
    assert "time.tau" in capsys.readouterr().err


def test_cli_infsup(capsys):
    assert main(["infsup", "--levels", "2"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "level,n,inf_sup"
    assert [l.split(",")[:2] for l in lines[1:]] == [["1", "2"], ["2", "4"]]
    assert all(float(l.split(",")[2]) > 0.3 for l in lines[1:])


def test_cli_check_model(small_cfg, capsys):
    assert main(["check-model", str(small_cfg), "--seed", "5"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.splitlines()[0].startswith("# seed=5 n_samples=200")
    assert "monotonicity" in out and "conductivity" in out


def test_cli_check_model_is_reproducible(small_cfg, capsys):
    main(["check-model", str(small_cfg)])
    first = capsys.readouterr().out
    main(["check-model", str(small_cfg)])
    assert capsys.readouterr().out == first


def test_cli_wsu(small_cfg, capsys):
    assert main(["wsu", str(small_cfg), "--eps", "0.01"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[1] == "t,relative_energy"
    assert len(lines) == 2 + 3 + 1
    assert "C_est" in lines[-1]


def test_cli_mms_rest_state(tmp_path, capsys):
    csv = tmp_path / "mms.csv"
    assert main(["mms", "rest_state", "--levels", "3", "--csv", str(csv)]) == EXIT_OK
    assert "# rest_state space study" in capsys.readouterr().out
    rows = csv.read_text().splitlines()
    assert rows[0] == "n,h,tau,u_L2,u_H1,u_D,theta_L2,max_picard"
    assert [r.split(",")[0] for r in rows[1:]] == ["4", "8", "16"]


def test_csv_of_fluid_at_rest_has_zero_kinetic_column(tmp_path):
    path = tmp_path / "rest.csv"
    write_diagnostics_csv(run(RunConfig(nx=2, T=0.02, tau=0.01), "rest"), path)
    lines = path.read_text().splitlines()
    col = CSV_COLUMNS.index("kinetic")
    assert len(lines) == 4
    assert all(float(l.split(",")[col]) == 0.0 for l in lines[1:])
