"""Joint ladder profiles along a path (or a two-route star) and the unraveling certificate.

Agents interact only through the timing of information reaching the DM.
Each agent's environment summarises the others by

* the residual variance of its disclosure when it lands at the DM, which
  grows with the time the signal spent upstream (its age when received) and
  downstream (relay delay), each relay stage treated as exponential with
  the relaying agent's effective pass rate;
* the direct channels of other agents into the DM, which reset the public
  belief at their pass rate whenever the gap lies outside their waiting band.

An agent's effective pass rate is its maximal clock rate times the
probability, under the stationary gap law, that it would run its clock and
disclose.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import ndtr

from .belief import gap_coefficients
from .model import (
    DM,
    EXPERT,
    INTERMEDIARY,
    AgentSpec,
    NetworkSpec,
    OUParams,
    SolverSettings,
    enumerate_simple_paths,
    is_arborescence,
    line_network,
)
from .qvi import Environment, LadderPolicy, Reset, ValueSolution, extract_ladder, solve_qvi
from .reputation import rep_from_pi


class PathError(RuntimeError):
    def __init__(self, code: str, detail: str = "", trace=None):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code
        self.trace = trace


@dataclass
class PathEquilibrium:
    policies: dict[int, LadderPolicy]
    iterations: int
    sup_change: float
    converged: bool
    solutions: dict[int, ValueSolution] = field(default_factory=dict)
    environments: dict[int, Environment] = field(default_factory=dict)
    pass_rates: dict[int, float] = field(default_factory=dict)
    trace: list[float] = field(default_factory=list)
    network: NetworkSpec | None = None
    order: tuple[int, ...] = ()


def supported_topology(net: NetworkSpec) -> bool:
    """Arborescences rooted at the DM and the single-expert two-intermediary star."""
    if is_arborescence(net):
        return True
    return is_two_route_star(net)


def is_two_route_star(net: NetworkSpec) -> bool:
    experts = net.experts
    if len(experts) != 1:
        return False
    e, dm = experts[0], net.dm
    inter = [a.id for a in net.nodes if a.role == INTERMEDIARY]
    if len(inter) != 2:
        return False
    i, j = inter
    want = {(e, i), (e, j), (i, dm), (j, dm)}
    return set(net.links) == want


def topological_order(net: NetworkSpec) -> list[int]:
    """Active agents from upstream to downstream (longest distance to the DM first)."""
    dm = net.dm

    def depth(i):
        paths = enumerate_simple_paths(net, i, dm)
        return max((len(p) for p in paths), default=0)

    return sorted(net.active, key=lambda i: (-depth(i), i))


def stationary_gap_sd(ou: OUParams) -> float:
    k, s2 = gap_coefficients(ou)
    return math.sqrt(s2 / (2.0 * k))


def pass_probability(policy: LadderPolicy, agent: AgentSpec, ou: OUParams) -> float:
    """Probability of running the clock and disclosing under the stationary gap law, at the prior reputation."""
    sd = stationary_gap_sd(ou)
    j = int(policy.row_index(rep_from_pi(agent.rep, agent.rep.pi0)))
    cuts = np.unique(np.concatenate([policy.thresholds[j], policy.clock_thresholds[j]]))
    edges = np.concatenate([[-np.inf], cuts, [np.inf]])
    if cuts.size:
        mids = np.concatenate([[cuts[0] - 1.0], 0.5 * (cuts[1:] + cuts[:-1]), [cuts[-1] + 1.0]])
    else:
        mids = np.zeros(1)
    r = np.full(mids.shape, rep_from_pi(agent.rep, agent.rep.pi0))
    act = policy.discloses_array(mids, r) & policy.clock_on_array(mids, r)
    cdf = ndtr((edges - ou.xbar) / sd)
    return float(np.sum(np.diff(cdf)[act]))


def _stage_factor(mu: float, kappa: float) -> float:
    """``E exp(-2 kappa D)`` for an exponential stage with rate ``mu``."""
    return mu / (mu + 2.0 * kappa) if mu > 0 else 0.0


def _route_factor(stages: Sequence[float], kappa: float) -> float:
    f = 1.0
    for mu in stages:
        f *= _stage_factor(mu, kappa)
    return f


def _waiting_band(policy: LadderPolicy, agent: AgentSpec) -> tuple[float, float]:
    j = int(policy.row_index(rep_from_pi(agent.rep, agent.rep.pi0)))
    return policy.effective_band(j)


def build_environment(net: NetworkSpec, i: int, ou: OUParams, rates: dict[int, float],
                      policies: dict[int, LadderPolicy]) -> Environment:
    """Environment of agent ``i`` given the others' pass rates and published ladders."""
    dm = net.dm
    vbar = ou.sigma**2 / (2.0 * ou.kappa)
    k = ou.kappa
    down_paths = enumerate_simple_paths(net, i, dm)
    if not down_paths:
        return Environment(v_eff=vbar)
    down_routes = [[rates[u] for u in p[1:-1]] for p in down_paths]
    if all(len(r) <= 1 for r in down_routes):
        # parallel single relays race: the first to pass delivers
        total = sum(r[0] if r else math.inf for r in down_routes)
        f_down = 1.0 if math.isinf(total) else _stage_factor(total, k)
    else:
        f_down = max(_route_factor(r, k) for r in down_routes)
    me = net.agent(i)
    f_up = 1.0
    if me.role != EXPERT:
        ups = [p for e in net.experts for p in enumerate_simple_paths(net, e, i)]
        if ups:
            f_up = max(_route_factor([rates[u] for u in p[:-1]], k) for p in ups)
        else:
            f_up = 0.0
    v_eff = vbar * (1.0 - f_up * f_down)
    on_my_routes = {u for p in down_paths for u in p}
    resets = []
    for j in net.in_neighbors(dm):
        if j == i or j in on_my_routes or j not in policies:
            continue
        aj = net.agent(j)
        lo, hi = _waiting_band(policies[j], aj)
        ups = [p for e in net.experts for p in enumerate_simple_paths(net, e, j)]
        fj = max((_route_factor([rates[u] for u in p[:-1]], k) for p in ups), default=0.0) if aj.role != EXPERT else 1.0
        resets.append(Reset(rate=aj.lambda_bar, lo=lo, hi=hi, v_reset=vbar * (1.0 - fj)))
    return Environment(v_eff=v_eff, resets=tuple(resets))


def _damp(new: LadderPolicy, old: LadderPolicy | None, w: float = 0.5) -> tuple[LadderPolicy, float]:
    """Blend thresholds row by row where the ladder shape is unchanged; returns the sup movement."""
    if old is None:
        return new, math.inf
    ths, move = [], 0.0
    for j, (tn, to) in enumerate(zip(new.thresholds, old.thresholds)):
        same = len(tn) == len(to) and new.disclose_below[j] == old.disclose_below[j]
        if same:
            blended = [w * a + (1 - w) * b for a, b in zip(tn, to)]
            move = max(move, max((abs(a - b) for a, b in zip(tn, to)), default=0.0))
            ths.append(blended)
        else:
            ths.append(list(tn))
            move = math.inf
    out = LadderPolicy(new.agent, new.r, ths, list(new.disclose_below), new.clock_thresholds,
                       list(new.clock_on_below), new.value_matching, new.pasting_gap, new.pasting_flag,
                       new.full_disclosure)
    return out, move


def solve_network(net: NetworkSpec, ou: OUParams, settings: SolverSettings | None = None,
                  tol: float = 1e-3, max_sweeps: int = 200, order: Sequence[int] | None = None,
                  damping: float = 0.5, initial: dict[int, LadderPolicy] | None = None) -> PathEquilibrium:
    """Gauss-Seidel best responses over all active agents until thresholds settle.

    ``initial`` seeds the iteration with a ladder profile instead of starting
    every agent from scratch.
    """
    settings = settings or SolverSettings()
    if not supported_topology(net):
        raise PathError("unsupported_topology", "equilibria are computed for trees and the two-route star")
    order = list(order) if order is not None else topological_order(net)
    policies: dict[int, LadderPolicy] = dict(initial or {})
    sols: dict[int, ValueSolution] = {}
    envs: dict[int, Environment] = {}
    rates = {i: net.agent(i).lambda_bar * (pass_probability(policies[i], net.agent(i), ou) if i in policies else 1.0)
             for i in net.active}
    trace = []
    sup = math.inf
    for sweep in range(1, max_sweeps + 1):
        sup = 0.0
        for i in order:
            agent = net.agent(i)
            env = build_environment(net, i, ou, rates, policies)
            sol = solve_qvi(agent, ou, env, settings)
            new = extract_ladder(sol, settings)
            pol, move = _damp(new, policies.get(i), damping)
            policies[i], sols[i], envs[i] = pol, sol, env
            rates[i] = agent.lambda_bar * pass_probability(pol, agent, ou)
            sup = max(sup, move)
        trace.append(sup)
        if sup < tol:
            return PathEquilibrium(policies, sweep, sup, True, sols, envs, rates, trace, net, tuple(order))
    raise PathError("no_convergence", f"sup threshold movement {sup:.3g} after {max_sweeps} sweeps", trace)


def solve_path(path: Sequence[AgentSpec], ou: OUParams, settings: SolverSettings | None = None,
               tol: float = 1e-3, max_sweeps: int = 200, reverse: bool = False) -> PathEquilibrium:
    """Equilibrium ladders on the line ``path[0] -> ... -> path[-1]`` (expert first, DM last)."""
    if len(path) < 2 or path[0].role != EXPERT or path[-1].role != DM:
        raise ValueError("path must run from an expert to the decision maker")
    net = line_network(path[0], list(path[1:-1]), path[-1])
    order = topological_order(net)
    if reverse:
        order = order[::-1]
    return solve_network(net, ou, settings, tol, max_sweeps, order)


def fixed_point_residual(eq: PathEquilibrium, ou: OUParams, settings: SolverSettings | None = None) -> float:
    """Largest threshold movement when every agent re-solves at the reported profile."""
    settings = settings or SolverSettings()
    net = eq.network
    worst = 0.0
    for i in eq.order:
        env = build_environment(net, i, ou, eq.pass_rates, eq.policies)
        lad = extract_ladder(solve_qvi(net.agent(i), ou, env, settings), settings)
        _, move = _damp(lad, eq.policies[i])
        worst = max(worst, move)
    return worst


def _shifted(pol: LadderPolicy, dx: float) -> LadderPolicy:
    return dataclasses.replace(pol, thresholds=[[t + dx for t in row] for row in pol.thresholds])


def threshold_gap(a: dict[int, LadderPolicy], b: dict[int, LadderPolicy]) -> float:
    """Sup distance between two ladder profiles; ``inf`` when any row changes shape."""
    worst = 0.0
    for i, pa in a.items():
        pb = b[i]
        for j, (ta, tb) in enumerate(zip(pa.thresholds, pb.thresholds)):
            if len(ta) != len(tb) or pa.disclose_below[j] != pb.disclose_below[j]:
                return math.inf
            worst = max(worst, max((abs(x - y) for x, y in zip(ta, tb)), default=0.0))
    return worst


@dataclass(frozen=True)
class RestartDiagnostic:
    shift: float
    gaps: tuple[float, ...]
    multiple: bool


def restart_diagnostic(eq: PathEquilibrium, ou: OUParams, settings: SolverSettings | None = None,
                       shift: float | None = None, tol: float = 1e-3) -> RestartDiagnostic:
    """Re-solve from the reported profile with every threshold shifted up and down.

    The ladder fixed point need not be unique; a restart that settles more
    than twice the tolerance away from ``eq`` flags a second fixed point.
    The default shift is a quarter of the stationary belief-gap deviation.
    """
    shift = 0.25 * stationary_gap_sd(ou) if shift is None else float(shift)
    gaps = []
    for dx in (shift, -shift):
        start = {i: _shifted(p, dx) for i, p in eq.policies.items()}
        other = solve_network(eq.network, ou, settings, tol=tol, order=eq.order, initial=start)
        gaps.append(threshold_gap(eq.policies, other.policies))
    return RestartDiagnostic(shift, tuple(gaps), any(g > 2 * tol for g in gaps))


# ---------------------------------------------------------------------------
# unraveling certificate


@dataclass(frozen=True)
class Certificate:
    mat_bound: float
    rep_bound: float
    gain: float
    sufficient: bool
    beta_min: float
    rho_max: float


def material_bound(agent: AgentSpec, ou: OUParams, rho: float | None = None) -> float:
    rho = ou.rho if rho is None else rho
    vbar = ou.sigma**2 / (2.0 * ou.kappa)
    b2 = agent.bias**2
    return agent.alpha * (vbar / (rho + 2 * ou.kappa) + 2.0 * math.sqrt(2.0 * vbar * (vbar + b2)) / (rho + ou.kappa))


def reputational_bound(agent: AgentSpec, rho: float, p: float, delta_rep: float, beta: float | None = None) -> float:
    beta = agent.beta if beta is None else beta
    lam = agent.lambda_bar
    return beta * p * delta_rep * lam / ((lam + rho) * rho)


def default_delta_rep(agent: AgentSpec) -> float:
    return 0.5 * (agent.rep.phi_high - agent.rep.phi_low)


def unraveling_certificate(agent: AgentSpec, ou: OUParams, p: float = 0.5, delta_rep: float | None = None) -> Certificate:
    """Sufficient condition for an agent to disclose at every opportunity.

    Compares the reputational gain of disclosing now against an upper bound
    on the material loss. ``beta_min`` inverts the reputational bound at the
    given discount rate; ``rho_max`` is the largest discount rate at which the
    gain stays positive, the largest positive root of the quartic obtained by
    clearing denominators in ``rep_bound(rho) = mat_bound(rho)``.
    """
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    delta_rep = default_delta_rep(agent) if delta_rep is None else delta_rep
    if not delta_rep > 0:
        raise ValueError("delta_rep must be positive")
    rho = ou.rho
    mat = material_bound(agent, ou)
    rep = reputational_bound(agent, rho, p, delta_rep)
    lam = agent.lambda_bar
    beta_min = mat * (lam + rho) * rho / (p * delta_rep * lam) if lam > 0 else math.inf
    rho_max = _rho_max(agent, ou, p, delta_rep)
    gain = rep - mat
    return Certificate(mat, rep, gain, gain > 0, beta_min, rho_max)


def _rho_max(agent: AgentSpec, ou: OUParams, p: float, delta_rep: float) -> float:
    K = agent.beta * p * delta_rep * agent.lambda_bar
    if K <= 0:
        return 0.0
    k = ou.kappa
    vbar = ou.sigma**2 / (2.0 * k)
    A = agent.alpha * vbar
    B = agent.alpha * 2.0 * math.sqrt(2.0 * vbar * (vbar + agent.bias**2))
    P = np.polynomial.Polynomial
    r = P([0.0, 1.0])
    lhs = K * (r + 2 * k) * (r + k)
    rhs = (agent.lambda_bar + r) * r * (A * (r + k) + B * (r + 2 * k))
    roots = (lhs - rhs).roots()
    real = [float(x.real) for x in roots if abs(x.imag) < 1e-9 * (1 + abs(x)) and x.real > 0]
    if not real:
        return math.inf if A == 0 and B == 0 else 0.0
    return max(real)


def rho_max_numeric(agent: AgentSpec, ou: OUParams, p: float, delta_rep: float) -> float:
    """Bracketing check of :func:`unraveling_certificate`'s ``rho_max``."""
    def g(r):
        return reputational_bound(agent, r, p, delta_rep) - material_bound(agent, ou, r)

    hi = 1.0
    while g(hi) > 0:
        hi *= 2
    lo = hi / 2
    while g(lo) <= 0 and lo > 1e-12:
        lo /= 2
    return brentq(g, lo, hi, xtol=1e-14)


def certificate_quadrature(agent: AgentSpec, ou: OUParams, p: float = 0.5, delta_rep: float | None = None) -> tuple[float, float]:
    """Material and reputational bounds by numerical integration of their discounted integrands.

    The material integrand is the decaying belief gap bound
    ``alpha (vbar e^{-2 kappa u} + 2 sqrt(2 vbar (vbar + b^2)) e^{-kappa u})``; the
    reputational integrand is ``beta p delta_rep`` times the probability that
    an opportunity has arrived by ``u``. Both are discounted at ``rho``.
    """
    delta_rep = default_delta_rep(agent) if delta_rep is None else delta_rep
    rho, k = ou.rho, ou.kappa
    vbar = ou.sigma**2 / (2.0 * k)
    cross = 2.0 * math.sqrt(2.0 * vbar * (vbar + agent.bias**2))
    lam = agent.lambda_bar

    def mat(u):
        return math.exp(-rho * u) * agent.alpha * (vbar * math.exp(-2 * k * u) + cross * math.exp(-k * u))

    def rep(u):
        return math.exp(-rho * u) * agent.beta * p * delta_rep * -math.expm1(-lam * u)

    opts = dict(epsabs=1e-13, epsrel=1e-12, limit=200)
    return quad(mat, 0, math.inf, **opts)[0], quad(rep, 0, math.inf, **opts)[0]
