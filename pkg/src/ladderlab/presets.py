"""Experiment presets: a scenario, the operations to run, CSV artifacts and assertions.

Every preset is split into a ``run`` step that writes CSV files into its own
output directory and a ``check`` step that reads those files back and
evaluates the preset's assertions. Nothing but the CSVs passes between the
two steps, so every assertion can be re-checked from the artifacts alone.
"""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.optimize import brentq
from scipy.stats import ks_2samp

from . import io
from .belief import BeliefState, filter_advance, ou_mean, ou_transition_sample, ou_var, stale_disclosure
from .formation import FormationInstance, classify, value_all
from .model import ConfigError, ScenarioConfig, load, loads
from .path import (
    certificate_quadrature,
    solve_network,
    unraveling_certificate,
)
from .reputation import rep_from_pi
from .simulate import (
    chain_delivery_cdf,
    delivered_fraction,
    run_batch,
    simulate_once,
    timing_statistics,
)
from .static import GaussianPrior, blocked_interval, direct_unraveling, static_path_solve, static_tree_rank
from .topology import compare_line_star, sweep_trees

Z95 = 1.959963984540054


# ---------------------------------------------------------------------------
# scenarios


def scenario_names() -> list[str]:
    root = resources.files(__package__).joinpath("scenarios")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_scenario(name_or_path: str) -> ScenarioConfig:
    """Load a scenario from a file path or by the name of a shipped scenario."""
    p = Path(name_or_path)
    if p.is_file():
        return load(p)
    name = p.name if p.name.endswith(".json") else p.name + ".json"
    res = resources.files(__package__).joinpath("scenarios", name)
    if not res.is_file():
        raise ConfigError(f"unknown scenario {name_or_path!r}; shipped: {', '.join(scenario_names())}")
    return loads(res.read_text())


# ---------------------------------------------------------------------------
# records


@dataclass(frozen=True)
class Assertion:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class RunContext:
    """Where a preset writes, how many threads it may use, and an optional replication override."""

    out: Path
    threads: int = 1
    reps: int | None = None

    def file(self, name: str) -> Path:
        return self.out / name

    def sim_config(self, cfg: ScenarioConfig) -> ScenarioConfig:
        if self.reps is None:
            return cfg
        return cfg.replace(sim=dataclasses.replace(cfg.sim, reps=int(self.reps)))


@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    scenario: str | None
    description: str
    run: Callable[[RunContext, ScenarioConfig | None], None]
    check: Callable[[RunContext], list[Assertion]]


@dataclass
class PresetResult:
    name: str
    assertions: list[Assertion]
    out: Path
    config_hash: str = ""
    seed: int | None = None
    artifacts: list[Path] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)


def _f(row: dict, key: str) -> float:
    return float(row[key])


def _b(row: dict, key: str) -> bool:
    return row[key] == "true"


class _Clock:
    """Collects wall-clock timings for a preset's runtime.csv."""

    def __init__(self):
        self.rows = []

    def __call__(self, stage: str, fn, *a, **kw):
        t = time.perf_counter()
        out = fn(*a, **kw)
        self.rows.append((stage, time.perf_counter() - t))
        return out

    def write(self, ctx: RunContext):
        io.write_csv(ctx.file("runtime.csv"), io.RUNTIME_COLUMNS, self.rows)


def _prior(cfg: ScenarioConfig) -> GaussianPrior:
    return GaussianPrior(cfg.ou.xbar, cfg.ou.stationary_variance)


def path_agents(cfg: ScenarioConfig) -> list:
    """Agents of a line network from the expert to the DM."""
    net = cfg.network
    node = net.experts[0]
    out = []
    while node != net.dm:
        out.append(net.agent(node))
        node = net.out_neighbors(node)[0]
    return out


def _static_row(case: str, biases, outcome) -> tuple:
    lo, hi = (math.nan, math.nan)
    if outcome.blocked_intervals:
        ivs = list(outcome.blocked_intervals.values())
        lo, hi = min(a for a, _ in ivs), max(b for _, b in ivs)
    return (case, " ".join(repr(float(b)) for b in biases), outcome.v0, outcome.blocked_measure,
            outcome.y_silent, lo, hi)


# ---------------------------------------------------------------------------
# static game


def _run_prop1(ctx: RunContext, cfg: ScenarioConfig) -> None:
    prior = _prior(cfg)
    e = path_agents(cfg)[0]
    rows = []
    for var in (0.25, prior.var, 4.0):
        for b in (-1.0, 0.0, e.bias, 2.0):
            out = direct_unraveling(GaussianPrior(prior.mean, var), e.alpha, b)
            rows.append(_static_row(f"direct var={var!r}", [b], out))
    io.write_csv(ctx.file("static.csv"), io.STATIC_COLUMNS, rows)


def _check_prop1(ctx: RunContext) -> list[Assertion]:
    rows = io.read_csv(ctx.file("static.csv"))
    bad = [r["case"] for r in rows if _f(r, "v0") != 0.0 or _f(r, "blocked_measure") != 0.0]
    return [Assertion("direct link unravels: v0 = 0 exactly", not bad and bool(rows), f"{len(rows)} cases, failures {bad}")]


def _run_prop2(ctx: RunContext, cfg: ScenarioConfig) -> None:
    prior = _prior(cfg)
    agents = path_agents(cfg)
    biases = [a.bias for a in agents]
    reversed_ = [biases[0]] + [-b for b in biases[1:]]
    rows = [_static_row("aligned", biases, static_path_solve([a.alpha for a in agents], biases, prior))]
    out = static_path_solve([a.alpha for a in agents], reversed_, prior)
    rows.append(_static_row("reversing", reversed_, out))
    io.write_csv(ctx.file("static.csv"), io.STATIC_COLUMNS, rows)
    ident = []
    for k, b in enumerate(reversed_):
        if b < 0:
            lo, hi = out.blocked_intervals[k]
            ref = blocked_interval(b, out.y_silent)
            ident.append(("blocked_lo", k, lo, out.y_silent, abs(lo - out.y_silent), 0.0))
            ident.append(("blocked_hi", k, hi, out.y_silent - 2.0 * b, abs(hi - (out.y_silent - 2.0 * b)), 0.0))
            ident.append(("blocked_interval_op", k, ref[1] - ref[0], -2.0 * b, abs(ref[1] - ref[0] + 2.0 * b), 1e-15))
            # endpoints as roots of the agent's disclose-versus-silence payoff difference
            y, c = out.y_silent, out.y_silent - b

            def g(theta, y=y, b=b):
                return (y - theta - b) ** 2 - b * b

            for end, (x0, x1) in (("lo", (c - 3 * abs(b), c)), ("hi", (c, c + 3 * abs(b)))):
                root = brentq(g, x0, x1, xtol=1e-15)
                ref_end = lo if end == "lo" else hi
                ident.append((f"indifference_{end}", k, root, ref_end, abs(root - ref_end), 4e-15 * (1 + abs(ref_end))))
    io.write_csv(ctx.file("identities.csv"), io.IDENTITY_COLUMNS, ident)


def _check_prop2(ctx: RunContext) -> list[Assertion]:
    rows = {r["case"]: r for r in io.read_csv(ctx.file("static.csv"))}
    ident = io.read_csv(ctx.file("identities.csv"))
    rev, al = rows["reversing"], rows["aligned"]
    return [
        Assertion("aligned path: v0 = 0 exactly", _f(al, "v0") == 0.0, f"v0={al['v0']}"),
        Assertion("bias-reversing path: v0 < 0", _f(rev, "v0") < 0.0, f"v0={rev['v0']}"),
        Assertion("bias-reversing path: blocked measure > 0", _f(rev, "blocked_measure") > 0.0,
                  f"measure={rev['blocked_measure']}"),
        Assertion("blocked interval endpoints match (y0, y0 - 2b)",
                  bool(ident) and all(_f(r, "abs_error") <= _f(r, "tolerance") for r in ident),
                  f"max error {max((_f(r, 'abs_error') for r in ident), default=math.nan)!r}"),
    ]


def _run_prop3(ctx: RunContext, cfg: ScenarioConfig) -> None:
    prior = _prior(cfg)
    agents = path_agents(cfg)
    e, mids = agents[0], [a.bias for a in agents[1:]]
    rows = []
    for case, biases, eb in (("tree", mids, e.bias), ("tree3", [0.2, 0.5, 0.8], e.bias),
                             ("mixed", [mids[0], -mids[-1]], e.bias)):
        rank = static_tree_rank(biases, prior, expert_bias=eb)
        for perm, v0 in rank.v0_by_permutation.items():
            out = static_path_solve([1.0] * (len(perm) + 1), [eb, *perm], prior)
            assert out.v0 == v0
            rows.append(_static_row(case, [eb, *perm], out))
    io.write_csv(ctx.file("static.csv"), io.STATIC_COLUMNS, rows)


def _check_prop3(ctx: RunContext) -> list[Assertion]:
    rows = io.read_csv(ctx.file("static.csv"))
    aligned = [r for r in rows if r["case"] in ("tree", "tree3")]
    mixed = [r for r in rows if r["case"] == "mixed"]
    return [
        Assertion("every ordering of an aligned line unravels: v0 = 0 exactly",
                  bool(aligned) and all(_f(r, "v0") == 0.0 for r in aligned), f"{len(aligned)} orderings"),
        Assertion("mixed-sign line blocks some states in every ordering",
                  bool(mixed) and all(_f(r, "v0") < 0 and _f(r, "blocked_measure") > 0 for r in mixed),
                  f"{len(mixed)} orderings"),
    ]


# ---------------------------------------------------------------------------
# solver


def _disagreement(ta, below_a: bool, tb, below_b: bool) -> float:
    """Length of the longest interval on which two one-row regions (thresholds plus side flag) disagree."""
    cuts = sorted(set(ta) | set(tb))
    if not cuts:
        return 0.0 if below_a == below_b else math.inf
    mids = [cuts[0] - 1.0] + [0.5 * (x + y) for x, y in zip(cuts, cuts[1:])] + [cuts[-1] + 1.0]

    def inside(th, below, x):
        return below ^ (sum(t <= x for t in th) % 2 == 1)

    worst, run_start = 0.0, None
    for k, x in enumerate(mids):
        differ = inside(ta, below_a, x) != inside(tb, below_b, x)
        if differ and (k == 0 or k == len(mids) - 1):
            return math.inf
        if differ and run_start is None:
            run_start = cuts[k - 1]
        if not differ and run_start is not None:
            worst = max(worst, cuts[k - 1] - run_start)
            run_start = None
    return worst


def _threshold_shift(a, b, h: float) -> float:
    """Largest disagreement between two ladders' disclosure and clock regions, in units of ``h``.

    Every threshold moving by less than one cell, or a band narrower than one
    cell appearing or vanishing, both give a shift below 1.
    """
    worst = 0.0
    for j in range(len(a.thresholds)):
        worst = max(worst, _disagreement(a.thresholds[j], a.disclose_below[j], b.thresholds[j], b.disclose_below[j]),
                    _disagreement(a.clock_thresholds[j], a.clock_on_below[j],
                                  b.clock_thresholds[j], b.clock_on_below[j]))
    return worst / h


def solver_rows(eq, eq2=None) -> list[tuple]:
    rows = []
    for i in sorted(eq.policies):
        sol, pol = eq.solutions[i], eq.policies[i]
        vm = max((max(map(abs, g)) for g in pol.value_matching if len(g)), default=0.0)
        pg = max((max(g) for g in pol.pasting_gap if len(g)), default=0.0)
        shift = _threshold_shift(pol, eq2.policies[i], sol.grid.h) if eq2 is not None else math.nan
        rows.append((i, sol.max_residual, sol.verification_gap, sol.waiting_verification_gap, vm, pg, shift))
    return rows


def _run_thm1(ctx: RunContext, cfg: ScenarioConfig) -> None:
    clock = _Clock()
    eq = clock("solve", solve_network, cfg.network, cfg.ou, cfg.solver)
    fine = dataclasses.replace(cfg.solver, m_grid=2 * cfg.solver.m_grid - 1)
    eq2 = clock("solve_doubled", solve_network, cfg.network, cfg.ou, fine)
    io.write_ladders(ctx.file("ladders.csv"), eq.policies)
    io.write_csv(ctx.file("solver.csv"), io.SOLVER_COLUMNS, solver_rows(eq, eq2))
    surf = []
    for i in sorted(eq.solutions):
        sol = eq.solutions[i]
        for j, r in enumerate(sol.grid.r):
            for k, m in enumerate(sol.grid.m):
                surf.append((i, float(r), float(m), float(sol.values[j, k]), float(sol.mv[j])))
    io.write_csv(ctx.file("value_surface.csv"), io.SURFACE_COLUMNS, surf)
    clock.write(ctx)


def _solver_assertions(rows, tol_value: float, tol_pasting: float) -> list[Assertion]:
    res = max(_f(r, "max_residual") for r in rows)
    wait = max(_f(r, "waiting_verification_gap") for r in rows)
    pg = max(_f(r, "max_pasting_gap") for r in rows)
    return [
        Assertion(f"max QVI residual <= {tol_value:g}", res <= tol_value, f"{res:.3g}"),
        Assertion("V >= MV wherever the agent waits", wait <= 0.0, f"max MV - V = {wait:.3g}"),
        Assertion(f"smooth-pasting relative gaps <= {tol_pasting:g}", pg <= tol_pasting, f"{pg:.3g}"),
    ]


def _check_thm1(ctx: RunContext) -> list[Assertion]:
    rows = io.read_csv(ctx.file("solver.csv"))
    ladders = io.read_csv(ctx.file("ladders.csv"))
    shift = max(_f(r, "doubling_shift_cells") for r in rows)
    secs = {r["stage"]: _f(r, "seconds") for r in io.read_csv(ctx.file("runtime.csv"))}
    out = _solver_assertions(rows, 1e-7, 1e-3)
    out += [
        Assertion("finite ladder extracted for every agent",
                  {r["agent"] for r in ladders if r["kind"] == "disclose"} == {r["agent"] for r in rows},
                  f"{len(ladders)} thresholds"),
        Assertion("thresholds move < 1 coarse cell under grid doubling", shift < 1.0, f"{shift:.3g} cells"),
        Assertion("solve at default grids within 2 minutes", secs["solve"] <= 120.0, f"{secs['solve']:.1f}s"),
    ]
    return out


def _run_verification(ctx: RunContext, cfg: ScenarioConfig) -> None:
    eq = solve_network(cfg.network, cfg.ou, cfg.solver)
    io.write_ladders(ctx.file("ladders.csv"), eq.policies)
    io.write_csv(ctx.file("solver.csv"), io.SOLVER_COLUMNS, solver_rows(eq))


def _check_verification(ctx: RunContext) -> list[Assertion]:
    rows = io.read_csv(ctx.file("solver.csv"))
    vm = max(_f(r, "max_value_matching") for r in rows)
    out = _solver_assertions(rows, 1e-7, 1e-3)
    out.append(Assertion("value matching at thresholds within 1e-3", vm <= 1e-3, f"{vm:.3g}"))
    return out


# ---------------------------------------------------------------------------
# dynamic unraveling


def _run_thm2(ctx: RunContext, cfg: ScenarioConfig) -> None:
    cfg = ctx.sim_config(cfg)
    net = cfg.network
    rows = []
    for i in net.active:
        a = net.agent(i)
        c = unraveling_certificate(a, cfg.ou, p=0.5)
        mq, rq = certificate_quadrature(a, cfg.ou, p=0.5)
        rows.append((i, a.beta, c.mat_bound, c.rep_bound, c.gain, c.sufficient, c.beta_min, c.rho_max, mq, rq))
    io.write_csv(ctx.file("certificate.csv"), io.CERTIFICATE_COLUMNS, rows)
    eq = solve_network(net, cfg.ou, cfg.solver)
    io.write_ladders(ctx.file("ladders.csv"), eq.policies)
    lam = min(net.agent(i).lambda_bar for i in net.active)
    t_max = 50.0 / lam
    batch = run_batch(cfg.replace(sim=dataclasses.replace(cfg.sim, horizon=t_max)), eq.policies, threads=ctx.threads)
    rates = [a.lambda_bar for a in path_agents(cfg)]
    drows = []
    for mult in (0.5, 1, 2, 5, 10, 20, 50):
        d = delivered_fraction(batch, mult / lam)
        drows.append((mult / lam, d.fraction, d.ci[0], d.ci[1], d.reps, chain_delivery_cdf(rates, mult / lam)))
    io.write_csv(ctx.file("delivery.csv"), io.DELIVERY_COLUMNS, drows)


def _check_thm2(ctx: RunContext) -> list[Assertion]:
    cert = io.read_csv(ctx.file("certificate.csv"))
    dl = io.read_csv(ctx.file("delivery.csv"))
    qerr = max(abs((_f(r, "rep_quad") - _f(r, "mat_quad")) - _f(r, "gain")) for r in cert)
    last = dl[-1]
    fr = [_f(r, "fraction") for r in dl]
    return [
        Assertion("certificate holds for every agent", all(_b(r, "sufficient") for r in cert),
                  " ".join(f"{r['agent']}:gain={float(r['gain']):.4g}" for r in cert)),
        Assertion("certificate gain matches quadrature to 1e-8", qerr <= 1e-8, f"{qerr:.3g}"),
        Assertion("delivered fraction >= 0.99 by T = 50/lambda (95% CI)", _f(last, "ci_low") >= 0.99,
                  f"fraction {last['fraction']} CI low {float(last['ci_low']):.4f}"),
        Assertion("delivered fraction is monotone in T", all(a <= b for a, b in zip(fr, fr[1:])),
                  " ".join(f"{x:.3f}" for x in fr)),
    ]


# ---------------------------------------------------------------------------
# comparative statics


SWEEPS = {
    "beta": (0.02, 0.05, 0.1, 0.2, 0.4),
    "sigma": (0.6, 0.8, 1.0, 1.2, 1.4),
    "bias": (0.1, 0.3, 0.5, 0.7, 0.9),
}


def _swept(cfg: ScenarioConfig, param: str, value: float, agent: int) -> ScenarioConfig:
    if param == "sigma":
        return cfg.with_ou(sigma=value)
    return cfg.with_agent(agent, **{param: value})


def sweep_rows(cfg: ScenarioConfig, param: str, values, target: int) -> list[tuple]:
    """Solve the network at each value of ``param`` and tabulate every agent's band per reputation row.

    ``beta`` and ``bias`` change agent ``target``; ``sigma`` changes the fundamental.
    """
    if param not in SWEEPS:
        raise ConfigError(f"unknown sweep parameter {param!r}; choose from {', '.join(SWEEPS)}")
    rows = []
    for value in values:
        c = _swept(cfg, param, float(value), target)
        eq = solve_network(c.network, c.ou, c.solver)
        for i in sorted(eq.policies):
            pol = eq.policies[i]
            widths = pol.inaction_width()
            cell = eq.solutions[i].grid.h
            for j, r in enumerate(pol.r):
                lo, hi = pol.effective_band(j)
                rows.append((param, float(value), i, float(r), lo, hi, float(widths[j]), cell))
    return rows


def _make_sweep_run(param: str):
    def run(ctx: RunContext, cfg: ScenarioConfig) -> None:
        target = path_agents(cfg)[1].id
        io.write_csv(ctx.file("sweep.csv"), io.SWEEP_COLUMNS, sweep_rows(cfg, param, SWEEPS[param], target))
        rep = cfg.network.agent(target).rep
        io.write_csv(ctx.file("target.csv"), ("agent", "prior_R"), [(target, float(rep_from_pi(rep, rep.pi0)))])
    return run


def _sweep_table(ctx: RunContext):
    rows = io.read_csv(ctx.file("sweep.csv"))
    tgt = io.read_csv(ctx.file("target.csv"))[0]
    agent = tgt["agent"]
    sel = [r for r in rows if r["agent"] == agent]
    values = sorted({_f(r, "value") for r in sel})
    rs = sorted({_f(r, "R") for r in sel})
    prior_row = min(rs, key=lambda x: abs(x - _f(tgt, "prior_R")))
    tab = {(_f(r, "value"), _f(r, "R")): r for r in sel}
    return values, rs, prior_row, tab


def _monotone(seq, direction: int, slack=None) -> bool:
    slack = slack or [0.0] * len(seq)
    return all(direction * (b - a) >= -max(sa, sb) for a, b, sa, sb in zip(seq, seq[1:], slack, slack[1:]))


def _make_sweep_check(param: str, direction: int):
    """Exact monotonicity at the prior reputation; on every reputation row up to one grid cell."""
    word = "decreasing" if direction < 0 else "increasing"

    def check(ctx: RunContext) -> list[Assertion]:
        values, rs, prior_row, tab = _sweep_table(ctx)

        def col(key, r):
            return [_f(tab[(v, r)], key) for v in values]

        at_prior = col("width", prior_row)
        rows_ok = [r for r in rs if _monotone(col("width", r), direction, col("cell", r))]
        out = [
            Assertion(f"inaction width weakly {word} in {param} at the prior reputation",
                      _monotone(at_prior, direction), " ".join(f"{w:.4f}" for w in at_prior)),
            Assertion(f"inaction width weakly {word} in {param} on every reputation row (to one grid cell)",
                      len(rows_ok) == len(rs), f"{len(rows_ok)}/{len(rs)} rows"),
            Assertion(f"strict change between the {param} endpoints", direction * (at_prior[-1] - at_prior[0]) > 0,
                      f"{at_prior[0]:.4f} -> {at_prior[-1]:.4f}"),
        ]
        if param == "bias":
            for key in ("lower", "upper"):
                exact = _monotone(col(key, prior_row), 1)
                out.append(Assertion(f"{key} threshold weakly increasing in b at the prior reputation", exact,
                                     " ".join(f"{x:.4f}" for x in col(key, prior_row))))
                ok = [r for r in rs if _monotone(col(key, r), 1, col("cell", r))]
                out.append(Assertion(f"{key} threshold weakly increasing in b on every reputation row (to one grid cell)",
                                     len(ok) == len(rs), f"{len(ok)}/{len(rs)} rows"))
        return out
    return check


# ---------------------------------------------------------------------------
# timing predictions


def _timing_variants(cfg: ScenarioConfig, which: str) -> dict[str, ScenarioConfig]:
    inter = path_agents(cfg)[1].id
    if which == "p1":
        return {"baseline": cfg, "sigma_x2": cfg.with_ou(sigma=2.0 * cfg.ou.sigma)}
    if which == "p2":
        hi = 4.0 * cfg.network.agent(inter).beta
        c = cfg
        for i in cfg.network.active:
            c = c.with_agent(i, beta=hi)
        return {"baseline": cfg, "beta_x4": c}
    return {"baseline": cfg, "unbiased": cfg.with_agent(inter, bias=0.0)}


def _make_timing_run(which: str):
    def run(ctx: RunContext, cfg: ScenarioConfig) -> None:
        cfg = ctx.sim_config(cfg)
        trows, drows = [], []
        for name, c in _timing_variants(cfg, which).items():
            eq = solve_network(c.network, c.ou, c.solver)
            ts = timing_statistics(run_batch(c, eq.policies, threads=ctx.threads))
            lo, hi = ts.up_minus_down_ci
            trows.append((name, ts.n_events, ts.mean, ts.quantiles[0.5], ts.burstiness, ts.burstiness_se,
                          ts.up_delay, ts.down_delay, -ts.up_minus_down, -hi, -lo))
            drows.extend(io.duration_cdf_rows(name, ts.durations))
        io.write_csv(ctx.file("timing.csv"), io.TIMING_COLUMNS, trows)
        io.write_csv(ctx.file("durations.csv"), io.DURATION_COLUMNS, drows)
    return run


def _durations_by_scenario(ctx: RunContext) -> dict[str, np.ndarray]:
    out: dict[str, list[float]] = {}
    for r in io.read_csv(ctx.file("durations.csv")):
        out.setdefault(r["scenario"], []).append(_f(r, "duration"))
    return {k: np.asarray(v) for k, v in out.items()}


def _check_p1(ctx: RunContext) -> list[Assertion]:
    d = _durations_by_scenario(ctx)
    p = ks_2samp(d["sigma_x2"], d["baseline"], alternative="less").pvalue
    return [Assertion("higher volatility: stochastically longer durations (one-sided KS, 5%)", p < 0.05, f"p={p:.3g}")]


def _check_p2(ctx: RunContext) -> list[Assertion]:
    d = _durations_by_scenario(ctx)
    p = ks_2samp(d["beta_x4"], d["baseline"], alternative="greater").pvalue
    return [Assertion("higher reputational stakes: stochastically shorter durations (one-sided KS, 5%)",
                      p < 0.05, f"p={p:.3g}")]


def _check_p3(ctx: RunContext) -> list[Assertion]:
    t = {r["scenario"]: r for r in io.read_csv(ctx.file("timing.csv"))}
    b = t["baseline"]
    return [Assertion("upward-biased intermediary: up-moves faster than down-moves (gap CI > 0)",
                      _f(b, "gap_lo") > 0, f"gap {float(b['gap']):.4g} CI ({float(b['gap_lo']):.4g}, {float(b['gap_hi']):.4g})")]


# ---------------------------------------------------------------------------
# topology


def _run_prop6(ctx: RunContext, cfg: ScenarioConfig) -> None:
    cfg = ctx.sim_config(cfg)
    agents = path_agents(cfg)
    clock = _Clock()
    rep = clock("sweep", sweep_trees, agents[0], agents[1:], cfg.network.agent(cfg.network.dm), cfg.ou,
                cfg.solver, cfg.sim, cfg.seed, ctx.threads)
    io.write_csv(ctx.file("topology.csv"), io.TOPOLOGY_COLUMNS,
                 [(n, v["V0"], v["V0_se"]) for n, v in rep.values.items()])
    io.write_csv(ctx.file("compare.csv"), io.COMPARE_COLUMNS, rep.rows())
    sorted_name = rep.notes["sorted"]
    io.write_csv(ctx.file("steepness.csv"), io.STEEPNESS_COLUMNS,
                 [(n, s, n == sorted_name) for n, s in rep.notes["steepness"].items()])
    io.write_csv(ctx.file("tolerance.csv"), ("quantity", "value"), [("solver_tol", cfg.solver.tol_pasting)])
    clock.write(ctx)


def _check_prop6(ctx: RunContext) -> list[Assertion]:
    topo = {r["topology"]: r for r in io.read_csv(ctx.file("topology.csv"))}
    cmp_ = [r for r in io.read_csv(ctx.file("compare.csv")) if r["metric"] == "V0_diff"]
    steep = io.read_csv(ctx.file("steepness.csv"))
    tol = _f(io.read_csv(ctx.file("tolerance.csv"))[0], "value")
    secs = sum(_f(r, "seconds") for r in io.read_csv(ctx.file("runtime.csv")))
    sorted_name = next(r["topology"] for r in steep if _b(r, "bias_sorted"))
    reversal = "line:" + "-".join(reversed(sorted_name[5:].split("-")))
    argmax = max(topo, key=lambda n: _f(topo[n], "V0"))
    beaten = [r["topology"] for r in cmp_ if _f(r, "estimate") - Z95 * _f(r, "se") > 0]
    rev = next(r for r in cmp_ if r["topology"] == reversal)
    rev_hi = _f(rev, "estimate") + Z95 * _f(rev, "se")
    s_sorted = next(_f(r, "max_inaction_width") for r in steep if _b(r, "bias_sorted"))
    s_min = min(_f(r, "max_inaction_width") for r in steep)
    return [
        Assertion("bias-sorted line has the largest estimated V0", argmax == sorted_name, f"argmax {argmax}"),
        Assertion("no ordering beats the bias-sorted line at 95%", not beaten, f"beaten by {beaten}"),
        Assertion("reversed line is worse than the sorted line (paired CI excludes 0)", rev_hi < 0,
                  f"diff {float(rev['estimate']):.4g}, CI upper {rev_hi:.4g}"),
        Assertion("bias-sorted ladders are weakly steepest (solver tolerance)", s_sorted <= s_min + tol,
                  f"sorted {s_sorted:.6g}, min {s_min:.6g}, tol {tol:g}"),
        Assertion("full sweep within 15 minutes", secs <= 900.0, f"{secs:.0f}s"),
    ]


def _run_thm3(ctx: RunContext, cfg: ScenarioConfig) -> None:
    cfg = ctx.sim_config(cfg)
    net = cfg.network
    e = net.agent(net.experts[0])
    mids = sorted((net.agent(k) for k in net.ids if net.agent(k).role == "intermediary"),
                  key=lambda a: (-a.beta, a.id))
    costs = {c for _, c in net.link_costs}
    rep = compare_line_star(e, mids[0], mids[1], net.agent(net.dm), cfg.ou, cfg.solver, cfg.sim, cfg.seed,
                            link_cost=max(costs) if costs else 0.0, threads=ctx.threads)
    io.write_csv(ctx.file("topology.csv"), io.TOPOLOGY_COLUMNS,
                 [(n, v["V0"], v["V0_se"]) for n, v in rep.values.items()])
    io.write_csv(ctx.file("compare.csv"), io.COMPARE_COLUMNS, rep.rows())


def _check_thm3(ctx: RunContext) -> list[Assertion]:
    cmp_ = {(r["topology"], r["metric"], r["baseline"]): r for r in io.read_csv(ctx.file("compare.csv"))}
    d = cmp_[("star", "V0_diff", "line")]
    w = cmp_[("star", "W_diff", "line")]
    lo = _f(d, "estimate") - Z95 * _f(d, "se")
    return [
        Assertion("V0(star) > V0(line) with paired CI excluding 0", lo > 0,
                  f"diff {float(d['estimate']):.4g} CI low {lo:.4g}"),
        Assertion("net-of-link-cost social comparison reported", math.isfinite(_f(w, "estimate")),
                  f"W diff {float(w['estimate']):.4g} (se {float(w['se']):.3g})"),
    ]


# ---------------------------------------------------------------------------
# formation


EPS_MULTS = (1.0, 2.0, 3.0)


def formation_instance(cfg: ScenarioConfig) -> FormationInstance:
    """The candidate links of a scenario are its link set; costs are the scenario's link costs."""
    net = cfg.network
    links = tuple(sorted(net.links))
    return FormationInstance(net.nodes, links, tuple((l, net.cost(l)) for l in links), cfg.ou, cfg.solver, cfg.sim,
                             cfg.seed)


def write_formation(ctx: RunContext, cfg: ScenarioConfig) -> None:
    """Value every subset of the scenario's links and write networks.csv, stability.csv and links.csv."""
    cfg = ctx.sim_config(cfg)
    inst = formation_instance(cfg)
    vals = value_all(inst, ctx.threads)
    width = len(inst.l_max)
    dm = cfg.network.dm
    nrows = [(io.mask_string(inst.mask(g), width), v.feasible, v.w, v.values[dm])
             for g, v in sorted(vals.items(), key=lambda kv: inst.mask(kv[0]))]
    io.write_csv(ctx.file("networks.csv"), io.NETWORKS_COLUMNS, nrows)
    srows = []
    pooled = None
    for mult in EPS_MULTS:
        rep = classify(inst, mult, valuations=vals, threads=ctx.threads, pooled_se=pooled)
        pooled = rep.pooled_se
        for g in sorted(vals, key=inst.mask):
            if not vals[g].feasible:
                continue
            stable = g in rep.stable
            wit = rep.witnesses.get(g) or []
            wtxt = f"{wit[0].kind}:{wit[0].link[0]}->{wit[0].link[1]}" if wit else ""
            gap = rep.w_gap.get(g, (math.nan, math.nan, (math.nan, math.nan)))
            srows.append((mult, rep.eps, io.mask_string(inst.mask(g), width), stable,
                          rep.classes.get(g, "") if stable else "", wtxt, gap[0], gap[2][0], gap[2][1]))
    io.write_csv(ctx.file("stability.csv"), io.STABILITY_COLUMNS, srows)
    io.write_csv(ctx.file("links.csv"), ("bit", "link", "cost"),
                 [(k, f"{a}->{b}", inst.cost((a, b))) for k, (a, b) in enumerate(inst.l_max)])


def _make_formation_check(cls: str):
    def check(ctx: RunContext) -> list[Assertion]:
        rows = io.read_csv(ctx.file("stability.csv"))
        out = []
        for mult in EPS_MULTS:
            hits = [r["bitmask"] for r in rows if float(r["eps_mult"]) == mult and _b(r, "stable")
                    and r["class"] == cls and _f(r, "w_gap_lo") > 0]
            out.append(Assertion(f"strictly {cls.replace('_', '-')} stable network at eps = {mult:g} x SE",
                                 bool(hits), f"networks {hits}"))
        return out
    return check


# ---------------------------------------------------------------------------
# appendix lemmas


def _run_oudecay(ctx: RunContext, cfg: ScenarioConfig) -> None:
    ou = cfg.ou
    rows = []
    x, scale = 1.7, 1.0 + abs(ou.xbar) + 1.7
    for s, t in ((0.1, 0.3), (0.5, 1.5), (2.0, 0.25)):
        comp = ou_mean(ou, ou_mean(ou, x, s), t)
        ref = ou_mean(ou, x, s + t)
        rows.append(("mean_semigroup", f"{s}+{t}", comp, ref, abs(comp - ref), 4e-16 * scale))
        comp = math.exp(-2 * ou.kappa * t) * ou_var(ou, s) + ou_var(ou, t)
        ref = ou_var(ou, s + t)
        rows.append(("var_semigroup", f"{s}+{t}", comp, ref, abs(comp - ref), 4e-16 * ou.stationary_variance))
        m, v = stale_disclosure(ou, x, s)
        rows.append(("stale_mean", f"{s}", m, ou.xbar + math.exp(-ou.kappa * s) * (x - ou.xbar),
                     abs(m - (ou.xbar + math.exp(-ou.kappa * s) * (x - ou.xbar))), 4e-16 * scale))
    # belief gap between two public beliefs decays at the mean-reversion rate without news
    quiet = dataclasses.replace(ou, news_precision=0.0)
    for u in (0.2, 1.0, 3.0):
        a = filter_advance(quiet, BeliefState(1.0, 0.0), u)
        b = filter_advance(quiet, BeliefState(-0.5, 0.0), u)
        comp = a.m - b.m
        ref = math.exp(-ou.kappa * u) * 1.5
        rows.append(("gap_decay", f"{u}", comp, ref, abs(comp - ref), 1e-14))
    # transition sampler moments against the closed form
    rng = np.random.default_rng(cfg.seed)
    n = 100_000
    for dt in (0.1, 1.0):
        draws = ou_transition_sample(ou, x, dt, rng, size=n)
        mu, var = ou_mean(ou, x, dt), ou_var(ou, dt)
        rows.append(("sample_mean", f"{dt}", float(draws.mean()), mu, abs(float(draws.mean()) - mu),
                     4.0 * math.sqrt(var / n)))
        rows.append(("sample_var", f"{dt}", float(draws.var(ddof=1)), var, abs(float(draws.var(ddof=1)) - var),
                     4.0 * var * math.sqrt(2.0 / (n - 1))))
    io.write_csv(ctx.file("identities.csv"), io.IDENTITY_COLUMNS, rows)


def _check_identities(ctx: RunContext) -> list[Assertion]:
    rows = io.read_csv(ctx.file("identities.csv"))
    groups: dict[str, list] = {}
    for r in rows:
        groups.setdefault(r["check"], []).append(r)
    return [Assertion(f"{k} within tolerance", all(_f(r, "abs_error") <= _f(r, "tolerance") for r in g),
                      f"max error {max(_f(r, 'abs_error') for r in g):.3g}") for k, g in groups.items()]


def _run_localsilence(ctx: RunContext, cfg: ScenarioConfig) -> None:
    cfg = ctx.sim_config(cfg)
    eq = solve_network(cfg.network, cfg.ou, cfg.solver)
    act = list(cfg.network.active)
    rows = []
    for rep in range(min(cfg.sim.reps, 50)):
        tr = simulate_once(cfg, eq.policies, rep)
        t = tr.path["t"]
        for a, start, dur in cfg.sim.windows:
            end = start + dur
            cf = simulate_once(cfg, eq.policies, rep, deleted=((a, start, end),))
            inside = np.flatnonzero((t >= start) & (t < end))
            span = np.arange(inside[0], min(inside[-1] + 2, t.size))
            pi = tr.path["pi"][span, act.index(a)]
            gap = float(np.max(np.abs(tr.path["m"][span] - cf.path["m"][span])))
            # events are stamped at the end of the step that realized them, so a step belongs to
            # the window when it starts inside it; relays logged under ``a`` are inbound receipts,
            # which a silent agent may still get
            own = [e.time for e in tr.events if e.agent == a and e.kind in ("opportunity", "disclosure")]
            step_start = t[np.clip(np.searchsorted(t, np.asarray(own) - 0.5 * (t[1] - t[0])) - 1, 0, t.size - 1)]
            n_ev = int(np.sum((step_start >= start) & (step_start < end)))
            rows.append((rep, a, start, end, float(pi.max() - pi.min()), gap, n_ev))
    io.write_csv(ctx.file("silence.csv"), io.SILENCE_COLUMNS, rows)


def _check_localsilence(ctx: RunContext) -> list[Assertion]:
    rows = io.read_csv(ctx.file("silence.csv"))
    return [
        Assertion("silent agent's reputation exactly constant over every window",
                  all(_f(r, "pi_range") == 0.0 for r in rows), f"{len(rows)} windows"),
        Assertion("belief path equals the agent-deleted counterfactual over every window",
                  all(_f(r, "max_m_gap") == 0.0 for r in rows),
                  f"max gap {max((_f(r, 'max_m_gap') for r in rows), default=math.nan):.3g}"),
        Assertion("no opportunities or disclosures inside announced windows",
                  all(int(r["events_in_window"]) == 0 for r in rows),
                  f"{sum(int(r['events_in_window']) for r in rows)} events in {len(rows)} windows"),
    ]


# ---------------------------------------------------------------------------
# registry


PRESETS: dict[str, ExperimentPreset] = {p.name: p for p in (
    ExperimentPreset("prop1_direct", "direct", "direct expert-to-DM link unravels", _run_prop1, _check_prop1),
    ExperimentPreset("prop2_blocked", "chain", "static path: a bias reversal blocks an interval", _run_prop2, _check_prop2),
    ExperimentPreset("prop3_orderedline", "chain", "every ordering of an aligned line unravels", _run_prop3, _check_prop3),
    ExperimentPreset("thm1_ladder", "chain", "QVI residuals, smooth pasting and grid refinement", _run_thm1, _check_thm1),
    ExperimentPreset("thm2_unraveling", "unravel", "certificate, quadrature and eventual delivery", _run_thm2, _check_thm2),
    ExperimentPreset("prop5_beta", "relay", "inaction width against reputational weight",
                     _make_sweep_run("beta"), _make_sweep_check("beta", -1)),
    ExperimentPreset("prop5_sigma", "relay", "inaction width against volatility",
                     _make_sweep_run("sigma"), _make_sweep_check("sigma", 1)),
    ExperimentPreset("prop5_bias", "relay", "thresholds against bias",
                     _make_sweep_run("bias"), _make_sweep_check("bias", 1)),
    ExperimentPreset("timing_p1", "relay", "volatility lengthens inter-disclosure durations",
                     _make_timing_run("p1"), _check_p1),
    ExperimentPreset("timing_p2", "relay", "reputational stakes shorten inter-disclosure durations",
                     _make_timing_run("p2"), _check_p2),
    ExperimentPreset("timing_p3", "relay", "bias makes favourable news arrive faster",
                     _make_timing_run("p3"), _check_p3),
    ExperimentPreset("prop6_treesweep", "prop6_tree", "bias-sorted line among all orderings", _run_prop6, _check_prop6),
    ExperimentPreset("thm3_linestar", "line", "reputational star against the ordered line", _run_thm3, _check_thm3),
    ExperimentPreset("prop7_under", "prop7_under", "a stable under-connected network",
                     write_formation, _make_formation_check("under_connected")),
    ExperimentPreset("prop7_over", "prop7_over", "a stable over-connected network",
                     write_formation, _make_formation_check("over_connected")),
    ExperimentPreset("lemma_oudecay", "chain", "OU transition identities and sampler moments",
                     _run_oudecay, _check_identities),
    ExperimentPreset("lemma_localsilence", "silence", "announced windows carry no inference",
                     _run_localsilence, _check_localsilence),
    ExperimentPreset("lemma_verification", "relay", "verification residuals of the solved ladders",
                     _run_verification, _check_verification),
)}


def run_preset(name: str, out: Path | str, threads: int = 1, reps: int | None = None,
               scenario: ScenarioConfig | None = None, check_only: bool = False) -> PresetResult:
    """Run a preset (unless ``check_only``), then evaluate its assertions from the CSVs it wrote."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    p = PRESETS[name]
    cfg = scenario if scenario is not None else (load_scenario(p.scenario) if p.scenario else None)
    ctx = RunContext(Path(out) / name, threads, reps)
    ctx.out.mkdir(parents=True, exist_ok=True)
    if not check_only:
        p.run(ctx, cfg)
    assertions = p.check(ctx)
    io.write_csv(ctx.file("assertions.csv"), io.ASSERTION_COLUMNS,
                 [(name, a.name, a.passed, a.detail) for a in assertions])
    arts = sorted(ctx.out.glob("*.csv"))
    return PresetResult(name, assertions, ctx.out, cfg.config_hash() if cfg else "", cfg.seed if cfg else None, arts)
