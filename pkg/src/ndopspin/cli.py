"""Command line entry points: solve, verify, oracle, compare-spinup."""

import argparse
import logging
import os
import sys

import numpy as np

from . import config as cfgmod
from .config import ConfigError, config_schema
from .grid import GridConstructionError, grid_summary_csv
from .outputs import (load_state, save_state, write_mass_plot, write_profile_plot,
                      write_residual_plot, write_trajectory_csv)
from .reactions import (check_bounds, check_mass_identity, random_states,
                        reaction_diagnostics_csv)
from .solver import (ThetaStepper, fixed_point_solve, naive_spinup,
                     state_norm, two_box_oracle)
from .svgplot import line_plot
from .transport import (check_operator_properties, operator_diagnostics_csv,
                        verify_velocity)

log = logging.getLogger("ndopspin")

ORACLE_TOL = 1e-7


def _load_problem(args):
    cfg = cfgmod.parse_config(args.config)
    if args.out:
        cfg.run.out_dir = args.out
    if args.seed is not None:
        cfg.run.seed = args.seed
    if args.reproducible:
        cfg.run.reproducible = True
    base = os.path.dirname(os.path.abspath(args.config))
    problem = cfgmod.build_problem(cfg, base)
    os.makedirs(cfg.run.out_dir, exist_ok=True)
    with open(os.path.join(cfg.run.out_dir, "config_used.toml"), "w") as fh:
        fh.write(cfgmod.serialize_config(cfg))
    return problem


def cmd_solve(args) -> int:
    p = _load_problem(args)
    out = p.config.run.out_dir
    y_init = "constant"
    if p.config.solver.init_state:
        base = os.path.dirname(os.path.abspath(args.config))
        y_init = load_state(os.path.join(base, p.config.solver.init_state), p.grid)
    y, rep = fixed_point_solve(p.solve_config, p.operator, p.model, y_init=y_init)
    write_trajectory_csv(y, os.path.join(out, "trajectory.csv"))
    save_state(y, os.path.join(out, "state.npz"))
    rep.to_csv(os.path.join(out, "report.csv"))
    with open(os.path.join(out, "report.txt"), "w") as fh:
        fh.write(rep.to_text() + "\n")
    grid_summary_csv(p.grid, os.path.join(out, "grid_summary.csv"))
    write_mass_plot(y, p.solve_config.total_mass, os.path.join(out, "mass_drift.svg"))
    write_residual_plot(rep, os.path.join(out, "residual_history.svg"))
    write_profile_plot(y, os.path.join(out, "profiles.svg"))
    log.info("solve %s in %d outer iterations (wall %.1f s); outputs in %s",
             "converged" if rep.converged else "DID NOT CONVERGE",
             len(rep.outer_history), rep.wall_time, out)
    return 0 if rep.converged else 2


def cmd_verify(args) -> int:
    p = _load_problem(args)
    out = p.config.run.out_dir
    vrep = verify_velocity(p.grid, p.velocity)
    orep = check_operator_properties(p.operator, n_random=100,
                                     seed=p.config.run.seed)
    rng = np.random.default_rng(p.config.run.seed)
    samples = random_states(p.grid, 50, rng, period=p.solve_config.period)
    brep = check_bounds(p.model, p.grid, samples)
    irep = check_mass_identity(p.model, p.grid, samples)

    operator_diagnostics_csv(orep, os.path.join(out, "operator_checks.csv"))
    reaction_diagnostics_csv(brep, irep, os.path.join(out, "reaction_checks.csv"))
    checks = [
        ("velocity divergence-free", vrep.passed,
         f"max rel divergence {vrep.max_rel_divergence:.3e}"),
        ("operator conservation/kernel/monotonicity", orep.passed,
         f"colsum {orep.colsum_rel.max():.3e}, const {orep.const_kernel_rel.max():.3e}, "
         f"quadform {orep.min_quadform:.3e}"),
        ("reaction bounds", brep.passed,
         f"max |d|/M_d {brep.max_d_ratio:.3f}, max |b|/M_b {brep.max_b_ratio:.3f}"),
        ("reaction mass identity", irep.passed,
         f"max rel residual {irep.rel_residuals.max():.3e}"),
    ]
    ok = True
    for name, passed, detail in checks:
        log.info("%-45s %s (%s)", name, "PASS" if passed else "FAIL", detail)
        ok = ok and passed
    return 0 if ok else 3


def _orbit_difference(y, orbit, floor: float):
    d1 = float(np.abs(y.y1 - orbit.y1).max()) \
        / max(float(np.abs(orbit.y1).max()), floor)
    d2 = float(np.abs(y.y2 - orbit.y2).max()) \
        / max(float(np.abs(orbit.y2).max()), floor)
    return d1, d2


def cmd_oracle(args) -> int:
    p = _load_problem(args)
    out = p.config.run.out_dir
    g = p.grid
    if g.nx != 1 or g.ny != 1 or g.n_cells != 2:
        log.error("oracle needs a two-box configuration (1x1 surface, 2 layers); "
                  "grid has %dx%d columns, %d cells", g.nx, g.ny, g.n_cells)
        return 1
    y, rep = fixed_point_solve(p.solve_config, p.operator, p.model)
    exchange = (p.config.diffusivity.kappa_vertical * g.horizontal_area
                / g.face_dist[0])
    orbit = two_box_oracle(p.params, tuple(g.cell_volume), exchange,
                           p.solve_config, g.h_bar_e, float(g.col_depth[0]))
    floor = 1e-6 * p.solve_config.total_mass / g.total_volume
    d1, d2 = _orbit_difference(y, orbit, floor)
    diff = max(d1, d2)
    with open(os.path.join(out, "oracle_comparison.csv"), "w") as fh:
        fh.write("time_node,time_s,oracle_n1,oracle_n2,oracle_p1,oracle_p2,"
                 "solver_n1,solver_n2,solver_p1,solver_p2\n")
        for k in range(y.n_nodes):
            row = (k, k * y.dt, *orbit.states[k], *y.y1[k], *y.y2[k])
            fh.write(("%d,%.17g" + ",%.17g" * 8 + "\n") % row)
        fh.write("# max_rel_difference_nutrient,%.17g\n" % d1)
        fh.write("# max_rel_difference_dop,%.17g\n" % d2)
    log.info("solver vs oracle: nutrient %.3e, DOP %.3e (tolerance %g)",
             d1, d2, ORACLE_TOL)
    return 0 if (rep.converged and diff <= ORACLE_TOL) else 3


def cmd_compare_spinup(args) -> int:
    p = _load_problem(args)
    out = p.config.run.out_dir
    n = p.solve_config.n_time_steps
    before = ThetaStepper.total_solves
    y_fp, rep = fixed_point_solve(p.solve_config, p.operator, p.model)
    fp_solves = ThetaStepper.total_solves - before
    target = max(max(rep.periodicity_residual), 1e-12)

    before = ThetaStepper.total_solves
    y_su, history = naive_spinup(p.operator, p.model, p.solve_config,
                                 target_residual=target)
    su_solves = ThetaStepper.total_solves - before

    dn = state_norm(p.grid, y_fp.y1 - y_su.y1, y_fp.y2 - y_su.y2, p.solve_config.dt)
    zn = max(1.0, state_norm(p.grid, y_fp.y1, y_fp.y2, p.solve_config.dt))
    orbit_diff = dn / zn
    fp_periods = fp_solves / n
    su_periods = su_solves / n
    with open(os.path.join(out, "spinup_comparison.csv"), "w") as fh:
        fh.write("method,period_integration_equivalents,periodicity_residual\n")
        fh.write("fixed_point,%.17g,%.17g\n" % (fp_periods, max(rep.periodicity_residual)))
        fh.write("spin_up,%.17g,%.17g\n" % (su_periods, history[-1]))
        fh.write("# orbit_rel_difference,%.17g\n" % orbit_diff)
        fh.write("# spinup_periods,%d\n" % len(history))
    line_plot(os.path.join(out, "spinup_comparison.svg"),
              [("spin-up periodicity residual",
                np.arange(1, len(history) + 1, dtype=float), np.array(history))],
              title="Spin-up convergence to the periodic orbit",
              xlabel="period", ylabel="relative residual", logy=True)
    log.info("fixed point: %.1f period-equivalents; spin-up: %.1f periods "
             "(%.1f equivalents); orbits differ by %.3e",
             fp_periods, len(history), su_periods, orbit_diff)
    return 0 if rep.converged and history[-1] <= target else 3


def cmd_print_schema(_args) -> int:
    print(config_schema())
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ndopspin",
        description="Mass-conserving periodic solver for two-tracer (N-DOP "
                    "type) marine ecosystem models")
    parser.add_argument("--log-level", default="INFO",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, needs_cfg in (
            ("solve", cmd_solve, True),
            ("verify", cmd_verify, True),
            ("oracle", cmd_oracle, True),
            ("compare-spinup", cmd_compare_spinup, True),
            ("print-config-schema", cmd_print_schema, False)):
        sp = sub.add_parser(name)
        sp.set_defaults(func=fn)
        if needs_cfg:
            sp.add_argument("--config", required=True, help="TOML run config")
            sp.add_argument("--out", default=None, help="output directory override")
            sp.add_argument("--seed", type=int, default=None)
            sp.add_argument("--reproducible", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, GridConstructionError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
