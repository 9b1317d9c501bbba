"""Command-line interface.

Every subcommand that reads a scenario prints its config hash and seed, then
writes CSV artifacts into ``--out`` (default ``$LADDERLAB_OUT`` or ``out``).

Exit codes: 0 success; 1 failed assertion or invalid scenario; 2 usage
error (bad flags, unreadable or malformed scenario file); 3 internal error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import traceback
from pathlib import Path

from . import io
from .formation import FormationError
from .model import ConfigError, ScenarioConfig, validate
from .path import (
    PathError,
    build_environment,
    certificate_quadrature,
    fixed_point_residual,
    restart_diagnostic,
    solve_network,
    unraveling_certificate,
)
from .presets import (
    PRESETS,
    SWEEPS,
    RunContext,
    load_scenario,
    path_agents,
    run_preset,
    solver_rows,
    sweep_rows,
    write_formation,
)
from .qvi import SolverError, extract_ladder, solve_qvi
from .simulate import SimulationError, estimate_values, simulate_once, timing_statistics
from .static import GaussianPrior, static_path_solve
from .topology import TopologyReport, compare, compare_line_star, link_marginal, sweep_trees, value_network

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 3


class _Fail(Exception):
    """A run that completed but whose result is a failure (exit 1)."""


def _scenario(args) -> ScenarioConfig:
    cfg = load_scenario(args.scenario)
    if args.reps is not None:
        cfg = cfg.replace(sim=dataclasses.replace(cfg.sim, reps=args.reps))
    print(f"config_hash={cfg.config_hash()} seed={cfg.seed}")
    return cfg


def _valid(cfg: ScenarioConfig) -> ScenarioConfig:
    bad = validate(cfg)
    if bad:
        for v in bad:
            print(f"violation {v}", file=sys.stderr)
        raise _Fail(f"{len(bad)} violation(s)")
    return cfg


def _out(args, name: str) -> Path:
    path = Path(args.out) / name
    print(f"wrote {path}")
    return path


# ---------------------------------------------------------------------------
# subcommands


def cmd_validate(args) -> int:
    cfg = _scenario(args)
    bad = validate(cfg)
    for v in bad:
        print(f"violation {v}")
    if bad:
        return EXIT_FAIL
    print("valid")
    return EXIT_OK


def cmd_static(args) -> int:
    cfg = _valid(_scenario(args))
    agents = path_agents(cfg)
    prior = GaussianPrior(cfg.ou.xbar, cfg.ou.stationary_variance)
    out = static_path_solve([a.alpha for a in agents], [a.bias for a in agents], prior, grid=args.grid)
    print(f"v0={out.v0!r} disclosed={out.disclosed_set} blocked_measure={out.blocked_measure!r}")
    rows = [(f"agent {a.id}", repr(a.bias), out.v0, out.blocked_measure, out.y_silent,
             *(out.blocked_intervals.get(k) or (float("nan"), float("nan"))))
            for k, a in enumerate(agents)]
    io.write_csv(_out(args, "static.csv"), io.STATIC_COLUMNS, rows)
    return EXIT_OK


def cmd_solve_ladder(args) -> int:
    cfg = _valid(_scenario(args))
    net = cfg.network
    agent = args.agent if args.agent is not None else net.experts[0]
    rates = {i: net.agent(i).lambda_bar for i in net.active}
    env = build_environment(net, agent, cfg.ou, rates, {})
    sol = solve_qvi(net.agent(agent), cfg.ou, env, cfg.solver)
    ladder = extract_ladder(sol, cfg.solver)
    print(f"agent={agent} max_residual={sol.max_residual:.3g} sweeps={sol.iterations}")
    io.write_ladders(_out(args, "ladders.csv"), {agent: ladder})
    rows = [(agent, float(r), float(m), float(sol.values[j, k]), float(sol.mv[j]))
            for j, r in enumerate(sol.grid.r) for k, m in enumerate(sol.grid.m)]
    io.write_csv(_out(args, "value_surface.csv"), io.SURFACE_COLUMNS, rows)
    return EXIT_OK


def cmd_solve_path(args) -> int:
    cfg = _valid(_scenario(args))
    eq = solve_network(cfg.network, cfg.ou, cfg.solver)
    res = fixed_point_residual(eq, cfg.ou, cfg.solver)
    print(f"sweeps={eq.iterations} sup_change={eq.sup_change:.3g} fixed_point_residual={res:.3g}")
    diag = restart_diagnostic(eq, cfg.ou, cfg.solver)
    gaps = " ".join(f"{g:.3g}" for g in diag.gaps)
    print(f"restart from thresholds shifted by +-{diag.shift:.3g}: gaps {gaps} multiple_fixed_points={diag.multiple}")
    for i, p in sorted(eq.pass_rates.items()):
        print(f"agent {i}: effective pass rate {p:.6g}")
    io.write_ladders(_out(args, "ladders.csv"), eq.policies)
    io.write_csv(_out(args, "solver.csv"), io.SOLVER_COLUMNS, solver_rows(eq))
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _valid(_scenario(args))
    eq = solve_network(cfg.network, cfg.ou, cfg.solver)
    est = estimate_values(cfg, eq.policies, threads=args.threads)
    for i in sorted(est.means):
        print(f"V[{i}] = {est.means[i]:.6g} (se {est.se[i]:.3g})")
    print(f"W = {est.w:.6g} (se {est.w_se:.3g})")
    io.write_csv(_out(args, "values.csv"), io.VALUES_COLUMNS, io.values_rows(est))
    try:
        ts = timing_statistics(est.batch)
    except SimulationError as exc:
        print(f"timing statistics skipped: {exc}")
    else:
        io.write_csv(_out(args, "durations.csv"), io.DURATION_COLUMNS, io.duration_cdf_rows(args.scenario, ts.durations))
    if args.trace is not None:
        tr = simulate_once(cfg, eq.policies, rep=args.trace)
        io.write_csv(_out(args, "trace.csv"), io.TRACE_COLUMNS, io.trace_rows(tr))
    return EXIT_OK


def _topology_csvs(args, rep) -> None:
    io.write_csv(_out(args, "topology.csv"), io.TOPOLOGY_COLUMNS,
                 [(n, v["V0"], v["V0_se"]) for n, v in rep.values.items()])
    io.write_csv(_out(args, "compare.csv"), io.COMPARE_COLUMNS, rep.rows())
    for d in rep.dominance:
        print(f"{d.a} - {d.b} [{d.metric}] = {d.diff:.5g} CI ({d.ci[0]:.5g}, {d.ci[1]:.5g}): {d.verdict}")


def cmd_compare(args) -> int:
    cfg = _valid(_scenario(args))
    net, dm = cfg.network, cfg.network.agent(cfg.network.dm)
    e = net.agent(net.experts[0])
    if args.mode == "trees":
        agents = path_agents(cfg)
        rep = sweep_trees(agents[0], agents[1:], dm, cfg.ou, cfg.solver, cfg.sim, cfg.seed, args.threads)
        print(f"sorted={rep.notes['sorted']} argmax={rep.notes['argmax']} sorted_is_max={rep.notes['sorted_is_max']}")
    elif args.mode == "line-star":
        mids = sorted((net.agent(k) for k in net.ids if net.agent(k).role == "intermediary"),
                      key=lambda a: (-a.beta, a.id))
        if len(mids) != 2:
            raise ConfigError("line-star comparison needs exactly two intermediaries")
        cost = max((c for _, c in net.link_costs), default=0.0)
        rep = compare_line_star(e, mids[0], mids[1], dm, cfg.ou, cfg.solver, cfg.sim, cfg.seed, cost, args.threads)
    else:
        if not args.link:
            raise ConfigError("--link FROM,TO is required for --mode link")
        link = tuple(int(x) for x in args.link.split(","))
        rep = TopologyReport()
        base = value_network(net, cfg.ou, cfg.solver, cfg.sim, cfg.seed, threads=args.threads)
        lm = link_marginal(link, net, cfg.ou, cfg.solver, cfg.sim, cfg.seed, args.cost, base, args.threads, rep)
        for k, (d, se) in sorted(lm.delta.items()):
            print(f"delta[{k}] = {d:.5g} (se {se:.3g})")
        print(f"delta_soc = {lm.delta_soc:.5g} (se {lm.delta_soc_se:.3g})")
        compare(rep, "G+l", "G", "W")
    _topology_csvs(args, rep)
    return EXIT_OK


def cmd_formation(args) -> int:
    cfg = _valid(_scenario(args))
    write_formation(RunContext(Path(args.out), args.threads), cfg)
    for name in ("networks.csv", "stability.csv", "links.csv"):
        print(f"wrote {Path(args.out) / name}")
    return EXIT_OK


def cmd_statics_sweep(args) -> int:
    cfg = _valid(_scenario(args))
    values = [float(x) for x in args.values.split(",")] if args.values else SWEEPS[args.param]
    agent = args.agent if args.agent is not None else path_agents(cfg)[1].id
    rows = sweep_rows(cfg, args.param, values, agent)
    io.write_csv(_out(args, "sweep.csv"), io.SWEEP_COLUMNS, rows)
    return EXIT_OK


def cmd_certify(args) -> int:
    cfg = _valid(_scenario(args))
    net = cfg.network
    ids = [args.agent] if args.agent is not None else list(net.active)
    rows = []
    for i in ids:
        a = net.agent(i)
        c = unraveling_certificate(a, cfg.ou, args.p, args.delta_rep)
        mq, rq = certificate_quadrature(a, cfg.ou, args.p, args.delta_rep)
        print(f"agent {i}: mat_bound={c.mat_bound:.10g} rep_bound={c.rep_bound:.10g} gain={c.gain:.10g} "
              f"beta_min={c.beta_min:.10g} rho_max={c.rho_max:.10g} sufficient={c.sufficient}")
        rows.append((i, a.beta, c.mat_bound, c.rep_bound, c.gain, c.sufficient, c.beta_min, c.rho_max, mq, rq))
    io.write_csv(_out(args, "certificate.csv"), io.CERTIFICATE_COLUMNS, rows)
    return EXIT_OK


def cmd_check(args) -> int:
    names = list(PRESETS) if args.all else [args.preset]
    if not args.all and not args.preset:
        raise ConfigError("give --preset NAME or --all")
    failed = []
    for name in names:
        res = run_preset(name, args.out, args.threads, args.reps, check_only=args.check_only)
        if res.config_hash:
            print(f"[{name}] config_hash={res.config_hash} seed={res.seed}")
        for a in res.assertions:
            print(f"[{name}] {'PASS' if a.passed else 'FAIL'} {a.name}: {a.detail}")
        if not res.passed:
            failed.append(name)
    if failed:
        print(f"failed presets: {', '.join(failed)}")
        return EXIT_FAIL
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    def globals_(suppress: bool) -> argparse.ArgumentParser:
        # flags are accepted before or after the subcommand; the subcommand copy
        # must not reset a value given before it
        g = argparse.ArgumentParser(add_help=False)
        dflt = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
        g.add_argument("--out", default=dflt(str(io.output_dir())),
                       help="output directory (default $LADDERLAB_OUT or ./out)")
        g.add_argument("--threads", type=int, default=dflt(1), help="worker threads for Monte Carlo")
        g.add_argument("--reps", type=int, default=dflt(None), help="override the scenario's replication count")
        return g

    common = globals_(True)
    p = argparse.ArgumentParser(prog="ladderlab", description="Reputational disclosure ladders on networks.",
                                parents=[globals_(False)])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_, scenario=True):
        sp = sub.add_parser(name, help=help_, parents=[common])
        if scenario:
            sp.add_argument("--scenario", required=True, help="shipped scenario name or JSON path")
        sp.set_defaults(fn=fn)
        return sp

    add("validate", cmd_validate, "list invariant violations of a scenario")
    sp = add("static", cmd_static, "static path game along the scenario's line")
    sp.add_argument("--grid", type=int, default=401)
    sp = add("solve-ladder", cmd_solve_ladder, "one agent's best-response ladder")
    sp.add_argument("--agent", type=int, default=None)
    add("solve-path", cmd_solve_path, "equilibrium ladders on a line, tree or two-route star")
    sp = add("simulate", cmd_simulate, "Monte Carlo values, W and durations under the equilibrium")
    sp.add_argument("--trace", type=int, default=None, metavar="REP", help="also export the event trace of REP")
    sp = add("compare", cmd_compare, "topology comparisons with common random numbers")
    sp.add_argument("--mode", choices=("trees", "line-star", "link"), default="trees")
    sp.add_argument("--link", default=None, help="FROM,TO for --mode link")
    sp.add_argument("--cost", type=float, default=0.0, help="cost of the added link for --mode link")
    add("formation", cmd_formation, "pairwise stability and efficiency over all subsets of the links")
    sp = add("statics-sweep", cmd_statics_sweep, "inaction bands across a parameter sweep")
    sp.add_argument("--param", choices=tuple(SWEEPS), required=True)
    sp.add_argument("--values", default=None, help="comma-separated values (default: a 5-point sweep)")
    sp.add_argument("--agent", type=int, default=None)
    sp = add("certify", cmd_certify, "dynamic unraveling certificate")
    sp.add_argument("--p", type=float, default=0.5)
    sp.add_argument("--delta-rep", type=float, default=None)
    sp.add_argument("--agent", type=int, default=None)
    sp = add("check", cmd_check, "run experiment presets and their assertions", scenario=False)
    sp.add_argument("--preset", choices=tuple(PRESETS), default=None)
    sp.add_argument("--all", action="store_true")
    sp.add_argument("--check-only", action="store_true", help="re-evaluate assertions on existing CSVs")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    if args.threads < 1 or (args.reps is not None and args.reps < 1):
        print("error: --threads and --reps must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.fn(args)
    except _Fail as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PathError, SolverError, SimulationError, FormationError) as exc:
        print(f"internal error [{exc.code}]: {exc}", file=sys.stderr)
        traceback.print_exc()
        return EXIT_INTERNAL
    except Exception as exc:  # diagnostics for anything unexpected
        print(f"internal error: {exc!r}", file=sys.stderr)
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
