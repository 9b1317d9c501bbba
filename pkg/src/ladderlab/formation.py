"""Network formation: net payoffs, pairwise stability, efficiency and classification.

The sender pays for each directed link. A network's dynamics only depend on
its informative core, the links lying on some expert-to-DM path: agents off
the core never hold a signal that can reach the DM and are assigned the
never-disclose policy. Valuations are therefore computed once per distinct
core (with common random numbers across all cores) and link costs are
applied per network. Networks whose core is empty are valued too; they are
the no-information benchmark that severing deviations can lead to.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .model import AgentSpec, NetworkSpec, OUParams, ScenarioConfig, SimSettings, SolverSettings, enumerate_simple_paths
from .path import solve_network, supported_topology
from .qvi import LadderPolicy
from .simulate import ValueEstimate, estimate_values, mean_se

Link = tuple[int, int]
MAX_LINKS = 12
MAX_SUBSETS = 4096


class FormationError(RuntimeError):
    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code


@dataclass(frozen=True)
class FormationInstance:
    nodes: tuple[AgentSpec, ...]
    l_max: tuple[Link, ...]
    costs: tuple[tuple[Link, float], ...]
    ou: OUParams
    solver: SolverSettings = SolverSettings()
    sim: SimSettings = SimSettings()
    seed: int = 0

    def __post_init__(self):
        if len(self.l_max) > MAX_LINKS:
            raise FormationError("too_many_links", f"|L_max| = {len(self.l_max)} > {MAX_LINKS}")
        if len(set(self.l_max)) != len(self.l_max):
            raise FormationError("duplicate_links")

    def cost(self, link: Link) -> float:
        return dict(self.costs).get(link, 0.0)

    def network(self, links: Iterable[Link]) -> NetworkSpec:
        links = frozenset(links)
        return NetworkSpec(self.nodes, links, tuple((l, self.cost(l)) for l in sorted(links)))

    def subsets(self) -> list[frozenset[Link]]:
        n = len(self.l_max)
        if 2**n > MAX_SUBSETS:
            raise FormationError("budget_exceeded", f"{2**n} subsets > {MAX_SUBSETS}")
        return [frozenset(l for k, l in enumerate(self.l_max) if mask >> k & 1) for mask in range(2**n)]

    def mask(self, links: Iterable[Link]) -> int:
        s = set(links)
        return sum(1 << k for k, l in enumerate(self.l_max) if l in s)

    def with_costs(self, scale: float) -> "FormationInstance":
        from dataclasses import replace

        return replace(self, costs=tuple((l, c * scale) for l, c in self.costs))


def informative_core(net: NetworkSpec) -> frozenset[Link]:
    """Links that lie on at least one simple expert-to-DM path."""
    core = set()
    for e in net.experts:
        for p in enumerate_simple_paths(net, e, net.dm):
            core.update(zip(p[:-1], p[1:]))
    return frozenset(core)


def feasible(net: NetworkSpec) -> bool:
    return all(enumerate_simple_paths(net, e, net.dm) for e in net.experts)


@dataclass
class NetworkValue:
    """Gross values per node for one network, with the estimate used for pairing."""

    links: frozenset[Link]
    feasible: bool
    values: dict[int, float]
    se: dict[int, float]
    w: float
    estimate: ValueEstimate | None = None


def net_payoffs(links: Iterable[Link], values: Mapping[int, float], costs: Mapping[Link, float]) -> dict[int, float]:
    """Values net of each node's outgoing link costs (the sender pays)."""
    out = dict(values)
    for (i, j) in links:
        out[i] = out[i] - costs.get((i, j), 0.0)
    return out


def _core_network(inst: FormationInstance, core: frozenset[Link]) -> NetworkSpec:
    on = {i for l in core for i in l}
    nodes = tuple(a for a in inst.nodes if a.id in on)
    return NetworkSpec(nodes, core, ())


def value_all(inst: FormationInstance, threads: int = 1, progress: Callable[[str], None] | None = None
              ) -> dict[frozenset[Link], NetworkValue]:
    """Value every subset of ``L_max``; one equilibrium solve and simulation per distinct core."""
    costs = dict(inst.costs)
    by_core: dict[frozenset[Link], ValueEstimate] = {}
    out = {}
    r_grid = np.linspace(0.0, 1.0, inst.solver.r_grid)
    for links in inst.subsets():
        net = inst.network(links)
        core = informative_core(net)
        if core not in by_core:
            policies: dict[int, LadderPolicy] = {}
            if core:
                cnet = _core_network(inst, core)
                if not supported_topology(cnet):
                    raise FormationError("unsupported_topology", f"core {sorted(core)}")
                policies.update(solve_network(cnet, inst.ou, inst.solver).policies)
            full = NetworkSpec(inst.nodes, core, ())
            for a in full.active:
                if a not in policies:
                    rep = full.agent(a).rep
                    policies[a] = LadderPolicy.everywhere(a, rep.phi_low + (rep.phi_high - rep.phi_low) * r_grid, False)
            cfg = ScenarioConfig(inst.ou, full, inst.solver, inst.sim, inst.seed)
            by_core[core] = estimate_values(cfg, policies, threads=threads, allow_infeasible=True)
            if progress:
                progress(f"valued core {sorted(core)}")
        est = by_core[core]
        link_cost = sum(costs.get(l, 0.0) for l in links)
        out[links] = NetworkValue(links, feasible(net), dict(est.means), dict(est.se),
                                  sum(est.means[i] for i in sorted(est.means)) - link_cost, est)
    return out


# ---------------------------------------------------------------------------
# stability and efficiency


@dataclass(frozen=True)
class Witness:
    kind: str  # "sever" or "add"
    agents: tuple[int, ...]
    link: Link
    gains: tuple[float, ...]


def check_pairwise_stable(links: Iterable[Link], l_max: Sequence[Link], costs: Mapping[Link, float],
                          valuations: Mapping[frozenset[Link], Mapping[int, float]], eps: float = 0.0
                          ) -> tuple[bool, list[Witness]]:
    """Pairwise stability with ``eps``-strict gains.

    A deviation strictly benefits an agent when its net payoff rises by more
    than ``eps``. ``G`` is stable when no endpoint of an existing link
    strictly gains from severing it and, for every absent link of ``L_max``,
    at least one endpoint does not strictly gain from adding it. Every
    violated condition is returned as a witness.
    """
    g = frozenset(links)

    def net(ls):
        if ls not in valuations:
            raise FormationError("missing_valuation", f"links {sorted(ls)}")
        return net_payoffs(ls, valuations[ls], costs)

    here = net(g)
    witnesses = []
    for l in sorted(g):
        there = net(g - {l})
        for a in l:
            gain = there[a] - here[a]
            if gain > eps:
                witnesses.append(Witness("sever", (a,), l, (gain,)))
    for l in l_max:
        if l in g:
            continue
        there = net(g | {l})
        gains = tuple(there[a] - here[a] for a in l)
        if all(x > eps for x in gains):
            witnesses.append(Witness("add", tuple(l), l, gains))
    return not witnesses, witnesses


def brute_force_stable(links: Iterable[Link], l_max: Sequence[Link], payoff: Callable[[frozenset[Link], int], float]) -> bool:
    """Reference check: tries every single-link toggle against every agent, exact inequalities."""
    g = frozenset(links)
    agents = sorted({a for l in l_max for a in l} | {a for l in g for a in l})
    for l in set(l_max) | g:
        h = g ^ {l}
        for a in agents:
            if a not in l:
                continue
            if l in g and payoff(h, a) > payoff(g, a):
                return False
        if l not in g and all(payoff(h, a) > payoff(g, a) for a in l):
            return False
    return True


def find_efficient(valuations: Mapping[frozenset[Link], NetworkValue], eps: float = 0.0) -> list[frozenset[Link]]:
    """Feasible networks whose social value is within ``eps`` of the maximum."""
    if len(valuations) > MAX_SUBSETS:
        raise FormationError("budget_exceeded", f"{len(valuations)} networks > {MAX_SUBSETS}")
    feas = {k: v for k, v in valuations.items() if v.feasible}
    if not feas:
        return []
    best = max(v.w for v in feas.values())
    return sorted((k for k, v in feas.items() if v.w >= best - eps), key=lambda s: (len(s), sorted(s)))


def classify_network(links: frozenset[Link], efficient: Sequence[frozenset[Link]]) -> str:
    if links in efficient:
        return "efficient"
    if any(links < e for e in efficient):
        return "under_connected"
    if any(links > e for e in efficient):
        return "over_connected"
    return "other"


@dataclass
class StabilityReport:
    eps: float
    pooled_se: float
    stable: list[frozenset[Link]]
    efficient: list[frozenset[Link]]
    classes: dict[frozenset[Link], str]
    witnesses: dict[frozenset[Link], list[Witness]]
    w_gap: dict[frozenset[Link], tuple[float, float, tuple[float, float]]] = field(default_factory=dict)
    valuations: dict[frozenset[Link], NetworkValue] = field(default_factory=dict)

    def strictly(self, cls: str) -> list[frozenset[Link]]:
        """Stable networks of class ``cls`` whose social shortfall has a 95% interval above zero."""
        return [g for g in self.stable if self.classes[g] == cls and g in self.w_gap and self.w_gap[g][2][0] > 0]


def pooled_deviation_se(inst: FormationInstance, vals: Mapping[frozenset[Link], NetworkValue]) -> float:
    """Root-mean-square CRN-paired standard error over all single-link deviations of feasible networks."""
    acc, n = 0.0, 0
    for g, v in vals.items():
        if not v.feasible:
            continue
        for l in inst.l_max:
            h = g ^ {l}
            a, b = vals[h].estimate, v.estimate
            if a is b:
                continue
            for node in l:
                _, se = mean_se(a.batch.reps, a.per_rep(node) - b.per_rep(node))
                acc += se * se
                n += 1
    return math.sqrt(acc / n) if n else 0.0


def classify(inst: FormationInstance, eps_mult: float = 2.0, valuations=None, threads: int = 1,
             pooled_se: float | None = None) -> StabilityReport:
    """Enumerate, value, and classify every feasible pairwise stable network.

    ``eps = eps_mult * pooled_se``. For each stable network that is not
    efficient, ``w_gap`` holds the CRN-paired difference ``W(E) - W(G)`` to the
    nearest efficient network ``E`` (by link count), with its 95% interval.
    """
    vals = valuations if valuations is not None else value_all(inst, threads)
    costs = dict(inst.costs)
    pooled = pooled_deviation_se(inst, vals) if pooled_se is None else pooled_se
    eps = eps_mult * pooled
    table = {k: v.values for k, v in vals.items()}
    efficient = find_efficient(vals, eps)
    stable, classes, wit, gaps = [], {}, {}, {}
    for g, v in vals.items():
        if not v.feasible:
            continue
        ok, w = check_pairwise_stable(g, inst.l_max, costs, table, eps)
        wit[g] = w
        if not ok:
            continue
        stable.append(g)
        classes[g] = classify_network(g, efficient)
        if classes[g] != "efficient" and efficient:
            target = min(efficient, key=lambda e: len(e ^ g))
            ea, eb = vals[target].estimate, v.estimate
            cost_diff = sum(costs.get(l, 0.0) for l in target) - sum(costs.get(l, 0.0) for l in g)
            d = sum(ea.per_rep(i) for i in sorted(ea.means)) - sum(eb.per_rep(i) for i in sorted(eb.means)) - cost_diff
            mean, se = mean_se(ea.batch.reps, d)
            gaps[g] = (mean, se, (mean - 1.959963984540054 * se, mean + 1.959963984540054 * se))
    stable.sort(key=lambda s: (len(s), sorted(s)))
    return StabilityReport(eps, pooled, stable, efficient, classes, wit, gaps, dict(vals))


def reprice(valuations: Mapping[frozenset[Link], NetworkValue], inst: FormationInstance
            ) -> dict[frozenset[Link], NetworkValue]:
    """Recompute social values under ``inst``'s link costs without re-simulating."""
    costs = dict(inst.costs)
    out = {}
    for k, v in valuations.items():
        gross = sum(v.values[i] for i in sorted(v.values))
        out[k] = NetworkValue(k, v.feasible, v.values, v.se, gross - sum(costs.get(l, 0.0) for l in k), v.estimate)
    return out
