"""Command-line entry point.

Exit codes: 0 success, 1 invalid input (config, arguments, data), 2 solver failure.
"""

import argparse
import logging
from pathlib import Path
import sys

import numpy as np

from .config import parse_config
from .errors import ConfigError, LinearSolveFailed, PicardDiverged

EXIT_OK, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _cmd_run(args):
    from .io import write_diagnostics_csv, write_fields_vtk
    from .stepper import run

    cfg = parse_config(args.config).run
    outdir = Path(args.out or cfg.output_dir or ".")
    outdir.mkdir(parents=True, exist_ok=True)
    traj = run(cfg)
    write_diagnostics_csv(traj, outdir / "diagnostics.csv")
    if cfg.vtk_every:
        for j, s in enumerate(traj.states):
            if j % cfg.vtk_every == 0 or j == len(traj.states) - 1:
                write_fields_vtk(s, outdir / f"fields_{j:05d}.vtk")
    last = traj.diagnostics[-1]
    print(f"scenario {cfg.scenario}: {cfg.n_steps} steps on {cfg.nx}x{cfg.ny} mesh")
    print(f"final t={last.t:.6g} kinetic={last.kinetic:.6e} internal={last.internal:.6e} min_theta={last.min_theta:.6e}")
    print(f"wrote {outdir / 'diagnostics.csv'}")
    return EXIT_OK


def _cmd_mms(args):
    from .mms import default_space_levels, default_time_levels, mms_case, run_convergence

    case = mms_case(args.case)
    if args.levels < 3:
        raise ConfigError("--levels must be at least 3")
    if args.study == "space":
        levels, T = default_space_levels(args.levels)
    else:
        taus = tuple(0.1 / 2**i for i in range(args.levels))
        levels, T = default_time_levels(n=args.n, taus=taus)
    table = run_convergence(case, levels, T, study=args.study)
    print(table.format())
    if args.csv:
        with open(args.csv, "w", newline="\n") as fh:
            fh.write("n,h,tau,u_L2,u_H1,u_D,theta_L2,max_picard\n")
            for r in table.rows:
                errs = ",".join(f"{e:.17g}" for e in (r.u_L2, r.u_H1, r.u_D, r.theta_L2))
                fh.write(f"{r.n},{r.h:.17g},{r.tau:.17g},{errs},{r.max_picard}\n")
    return EXIT_OK


def _cmd_wsu(args):
    from .mms import run_wsu_experiment

    cfg = parse_config(args.config)
    res = run_wsu_experiment(cfg.run, args.eps, scenario=cfg.run.scenario, theta_scale=cfg.theta_scale)
    print(f"# relative energy, scenario {cfg.run.scenario}, eps={args.eps:g}")
    print("t,relative_energy")
    for t, e in zip(res.times, res.energies):
        print(f"{t:.17g},{e:.17g}")
    if res.uniqueness_violation:
        print("uniqueness violation: E0 = 0 but relative energy became positive")
    else:
        print(f"C_est = {res.C_est:.6g}; bound E_j <= E_0 exp(C_est t_j) holds: {res.bound_holds}")
    return EXIT_OK


def _cmd_check_model(args):
    from .constitutive import (
        check_conductivity_bounds,
        check_growth_coercivity,
        check_monotonicity,
        check_theta_lipschitz,
    )

    cfg = parse_config(args.config)
    model, law = cfg.run.model, cfg.run.law
    seed = cfg.seed if args.seed is None else args.seed
    n = cfg.n_samples
    print(f"# seed={seed} n_samples={n} model={model.kind} r={model.r:g}")
    mono = check_monotonicity(model, n, seed)
    print(f"monotonicity: min pairing {mono.min_pairing:.6e}, strong-monotonicity estimate {mono.strong_mono_constant_est:.6e}")
    gc = check_growth_coercivity(model, n, seed)
    print(f"growth constant estimate {gc.growth_c_est:.6e}, coercivity constant estimate {gc.coercivity_c_est:.6e}")
    if model.kind == "carreau_yasuda":
        lip = check_theta_lipschitz(model, n_samples=n, seed=seed)
        print(f"temperature Lipschitz estimate {lip.C_est:.6e}")
    cond = check_conductivity_bounds(law, n, seed)
    print(f"conductivity: min {cond.min_value:.6e}, lower bound holds {cond.lower_ok}, upper bound holds {cond.upper_ok}")
    return EXIT_OK


def _cmd_infsup(args):
    from .mesh import unit_square_mesh
    from .spaces import build_space, inf_sup_constant

    if args.levels < 1:
        raise ConfigError("--levels must be at least 1")
    print("level,n,inf_sup")
    for level in range(1, args.levels + 1):
        mesh = unit_square_mesh(level)
        beta = inf_sup_constant(build_space(mesh, "P2_vector"), build_space(mesh, "P1"))
        print(f"{level},{2**level},{beta:.12g}")
    return EXIT_OK


def build_parser():
    p = _Parser(prog="nnheat", description="Heat-conducting non-Newtonian flow simulator")
    p.add_argument("-v", "--verbose", action="store_true", help="log solver iterations")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    r = sub.add_parser("run", help="run a simulation from a configuration file")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (overrides output.dir)")
    r.set_defaults(func=_cmd_run)

    m = sub.add_parser("mms", help="manufactured-solution convergence study")
    m.add_argument("case")
    m.add_argument("--levels", type=int, default=4)
    m.add_argument("--study", choices=("space", "time"), default="space")
    m.add_argument("--n", type=int, default=32, help="cells per side for the time study")
    m.add_argument("--csv", help="also write the error table as CSV")
    m.set_defaults(func=_cmd_mms)

    w = sub.add_parser("wsu", help="relative-energy perturbation experiment")
    w.add_argument("config")
    w.add_argument("--eps", type=float, required=True)
    w.set_defaults(func=_cmd_wsu)

    c = sub.add_parser("check-model", help="sample the constitutive assumptions")
    c.add_argument("config")
    c.add_argument("--seed", type=int)
    c.set_defaults(func=_cmd_check_model)

    i = sub.add_parser("infsup", help="inf-sup constants on refined unit-square meshes")
    i.add_argument("--levels", type=int, default=3)
    i.set_defaults(func=_cmd_infsup)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return exc.code
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_INPUT
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (PicardDiverged, LinearSolveFailed, np.linalg.LinAlgError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
