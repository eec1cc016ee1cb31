import math

import numpy as np
import pytest

from nnheat.constitutive import ConstitutiveModel, newtonian
from nnheat.diagnostics import kinetic_energy
from nnheat.errors import ConfigError, PicardDiverged
from nnheat.forms import Discretization
from nnheat.scenarios import Scenario, get_scenario
from nnheat.spaces import DiscreteField
from nnheat.stepper import (
    RunConfig,
    initialize,
    mean_zero,
    min_penalty_exponent,
    project_divergence_free,
    run,
    step,
    time_average_force,
)

SMALL = RunConfig(nx=4, model=newtonian(0.1), T=0.04, tau=0.02, picard_tol=1e-10)


def pts(n=7, seed=0):
    return np.random.default_rng(seed).uniform(size=(n, 2))


@pytest.mark.parametrize(
    "f,t0,t1,expected",
    [
        (lambda t, x: np.full(x.shape[:-1], math.sin(t)), 0.0, 0.1, (1 - math.cos(0.1)) / 0.1),
        (lambda t, x: np.full(x.shape[:-1], t**5), 0.0, 1.0, 1 / 6),
        (lambda t, x: np.full(x.shape[:-1], 3.0), 0.2, 0.7, 3.0),
        (lambda t, x: np.full(x.shape[:-1], t), 1.0, 2.0, 1.5),
    ],
)
def test_time_average_force(f, t0, t1, expected):
    avg = time_average_force(f, t0, t1)
    np.testing.assert_allclose(avg(pts()), expected, rtol=1e-9)


def test_time_average_keeps_spatial_dependence():
    avg = time_average_force(lambda t, x: t * x, 0.0, 2.0)
    p = pts()
    np.testing.assert_allclose(avg(p), p, rtol=1e-14)


def test_time_average_of_none_and_bad_interval():
    assert time_average_force(None, 0.0, 1.0) is None
    with pytest.raises(ValueError):
        time_average_force(lambda t, x: x, 1.0, 1.0)


@pytest.mark.parametrize("r,expected", [(1.5, 6.0), (2.0, 5.0), (3.0, 5.0), (1.25, 10.0)])
def test_min_penalty_exponent(r, expected):
    assert min_penalty_exponent(r) == pytest.approx(expected)


def test_defaults():
    cfg = RunConfig()
    assert cfg.ny == cfg.nx == 16
    assert cfg.n_steps == 10
    assert cfg.r_star == pytest.approx(6.0)
    assert math.isinf(cfg.k)


@pytest.mark.parametrize(
    "kwargs,match",
    [
        ({"T": 0.105, "tau": 0.01}, "integer"),
        ({"tau": 0.0}, "time.tau"),
        ({"T": -1.0}, "time.T"),
        ({"nx": 0}, "mesh.nx"),
        ({"k": 0.5}, "penalty.k"),
        ({"model": ConstitutiveModel(kind="power_law", r=1.5), "r_star": 4.0}, "penalty.r_star"),
        ({"r_star": 5.0}, "penalty.r_star"),
        ({"picard_tol": 0.0}, "picard_tol"),
        ({"picard_max": 0}, "picard_max"),
        ({"damping": 1.5}, "damping"),
        ({"damping": 0.0}, "damping"),
    ],
)
def test_config_validation(kwargs, match):
    with pytest.raises(ConfigError, match=match):
        RunConfig(**kwargs)


def test_with_revalidates():
    cfg = RunConfig()
    assert cfg.with_(nx=8).nx == 8
    with pytest.raises(ConfigError):
        cfg.with_(tau=0.03)


def test_build_mesh_from_file(tmp_path):
    path = tmp_path / "m.txt"
    path.write_text("4 2\n0 0\n1 0\n1 1\n0 1\n0 1 2\n0 2 3\n")
    assert RunConfig(mesh_file=str(path)).build_mesh().n_triangles == 2
    assert RunConfig(nx=3, ny=2).build_mesh().n_triangles == 12


def test_initialize_rest():
    s = initialize(SMALL, "rest")
    assert s.t == 0.0 and s.index == 0
    assert np.all(s.u.coeffs == 0)
    assert np.all(s.p.coeffs == 0)
    np.testing.assert_allclose(s.theta.coeffs, 1.0)


def test_initialize_projects_to_discretely_solenoidal():
    disc = Discretization(SMALL.build_mesh())
    s = initialize(SMALL, "decay", disc)
    assert np.max(np.abs(disc.divergence @ s.u.coeffs[disc.free])) < 1e-13
    assert np.all(s.u.coeffs[disc.velocity.dirichlet_dofs] == 0)
    assert s.theta.coeffs.min() >= 1.0


def test_projection_of_gradient_field_shrinks_under_refinement():
    # gradients are L2-orthogonal to solenoidal fields, so only discretization error survives
    from nnheat.spaces import norm

    grad = lambda p: np.stack([np.cos(np.pi * p[..., 0]), np.zeros(p.shape[:-1])], axis=-1)
    sizes = []
    for n in (4, 8, 16):
        disc = Discretization(SMALL.with_(nx=n).build_mesh())
        u = project_divergence_free(disc, grad)
        assert np.all(u.coeffs[disc.velocity.dirichlet_dofs] == 0)
        sizes.append(norm(u))
    assert sizes[0] < math.sqrt(0.5)  # ||grad||
    assert sizes[2] < sizes[1] < sizes[0]


def test_initialize_rejects_nonpositive_temperature():
    sc = Scenario("cold", lambda p: np.zeros(p.shape), lambda p: p[..., 0] - 0.5)
    with pytest.raises(ValueError, match="positive"):
        initialize(SMALL, sc)


def test_initialize_rejects_temperature_below_scenario_bound():
    sc = Scenario("low", lambda p: np.zeros(p.shape), lambda p: np.full(p.shape[:-1], 0.5), theta_min=1.0)
    with pytest.raises(ValueError, match="lower bound"):
        initialize(SMALL, sc)


def test_bad_scenario_type():
    with pytest.raises(TypeError):
        initialize(SMALL, 42)


def test_rest_state_is_fixed_point_in_one_iteration():
    disc = Discretization(SMALL.build_mesh())
    s0 = initialize(SMALL, "rest", disc)
    s1 = step(s0, SMALL, disc)
    assert s1.picard_iters == 1
    assert s1.picard_residual < 1e-15
    assert np.all(s1.u.coeffs == 0)
    np.testing.assert_allclose(s1.theta.coeffs, 1.0, rtol=1e-14)
    assert s1.t == pytest.approx(SMALL.tau)
    assert s1.index == 1


def test_unforced_step_reduces_kinetic_energy():
    disc = Discretization(SMALL.build_mesh())
    s0 = initialize(SMALL, "decay", disc)
    s1 = step(s0, SMALL, disc)
    assert kinetic_energy(s1.u) < kinetic_energy(s0.u)
    assert s1.picard_residual <= SMALL.picard_tol
    assert s1.theta.coeffs.min() >= 1.0 - 1e-12


def test_pressure_is_mean_zero():
    disc = Discretization(SMALL.build_mesh())
    s1 = step(initialize(SMALL, "decay", disc), SMALL, disc)
    M = disc.pressure.mass_matrix()
    assert abs((M @ s1.p.coeffs).sum()) < 1e-14


def test_mean_zero():
    disc = Discretization(SMALL.build_mesh())
    p = DiscreteField(disc.pressure, np.full(disc.pressure.dof_count, 3.0))
    np.testing.assert_allclose(mean_zero(p).coeffs, 0.0, atol=1e-14)


def test_run_records_every_level():
    traj = run(SMALL, "decay")
    assert len(traj) == 3 == len(traj.diagnostics)
    np.testing.assert_allclose(traj.times, [0.0, 0.02, 0.04])
    assert [s.index for s in traj.states] == [0, 1, 2]


def test_run_without_recording():
    assert run(SMALL, "rest", record=False).diagnostics == []


def test_time_interpolants():
    traj = run(SMALL, "decay")
    u0, u1, u2 = (s.u.coeffs for s in traj.states)
    np.testing.assert_array_equal(traj.piecewise_constant(0.0), u0)
    np.testing.assert_array_equal(traj.piecewise_constant(0.01), u1)
    np.testing.assert_array_equal(traj.piecewise_constant(0.02), u1)
    np.testing.assert_array_equal(traj.piecewise_constant(0.03), u2)
    np.testing.assert_allclose(traj.piecewise_linear(0.03), 0.5 * (u1 + u2), rtol=1e-14)
    np.testing.assert_allclose(traj.piecewise_linear(0.02), u1, rtol=1e-14)
    np.testing.assert_array_equal(traj.piecewise_linear(0.0, "theta"), traj.states[0].theta.coeffs)


def test_picard_budget_exhausted_raises():
    cfg = SMALL.with_(picard_max=1, picard_tol=1e-14)
    disc = Discretization(cfg.build_mesh())
    with pytest.raises(PicardDiverged) as info:
        step(initialize(cfg, "decay", disc), cfg, disc)
    assert info.value.iterations == 1


def test_damping_still_converges():
    cfg = SMALL.with_(damping=0.5, picard_max=200)
    disc = Discretization(cfg.build_mesh())
    s0 = initialize(cfg, "decay", disc)
    damped = step(s0, cfg, disc)
    plain = step(s0, SMALL, disc)
    assert damped.picard_iters > plain.picard_iters
    np.testing.assert_allclose(damped.u.coeffs, plain.u.coeffs, atol=1e-8)


def test_lost_positivity_is_reported_as_divergence():
    # a strong heat sink drives the temperature negative inside the iteration
    cfg = SMALL.with_(tau=0.04, T=0.04)
    disc = Discretization(cfg.build_mesh())
    s0 = initialize(cfg, "rest", disc)
    with pytest.raises(PicardDiverged):
        step(s0, cfg, disc, theta_source=lambda p: np.full(p.shape[:-1], -1e3))


@pytest.mark.parametrize("scenario", ["decay", "carreau_heat", "stokes_heat"])
def test_projection_does_not_increase_l2_norm(scenario):
    from nnheat.spaces import _eval_callable, integrate, norm

    disc = Discretization(SMALL.build_mesh())
    sc = get_scenario(scenario)
    u = project_divergence_free(disc, sc.u0)
    exact = math.sqrt(integrate(disc.velocity, np.sum(_eval_callable(disc.velocity, sc.u0, 8) ** 2, axis=-1), 8))
    assert norm(u) <= exact * (1 + 1e-12)


def test_per_step_energy_residual_within_solver_tolerance():
    from nnheat.diagnostics import energy_balance_residual

    traj = run(SMALL, "decay")
    for prev, cur in zip(traj.states, traj.states[1:]):
        eb = energy_balance_residual(prev, cur, SMALL)
        assert abs(eb.residual) <= max(1e-10, 10 * SMALL.picard_tol * eb.scale)
        assert eb.kinetic_jump <= 0
    assert traj.states[0].theta.coeffs.min() >= 0.5
