"""Valuing and comparing network topologies with common random numbers.

Every topology is solved for its equilibrium ladders and then simulated with
the same scenario seed, so replication ``r`` of one topology and replication
``r`` of another share their fundamental path and each agent's clock budgets.
Differences are therefore paired replication by replication.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .model import (
    AgentSpec,
    NetworkSpec,
    OUParams,
    ScenarioConfig,
    SimSettings,
    SolverSettings,
    check_bias_aligned,
    line_network,
)
from .path import PathEquilibrium, PathError, solve_network, supported_topology
from .qvi import LadderPolicy
from .simulate import ValueEstimate, estimate_values, paired_difference

Z95 = 1.959963984540054


@dataclass
class Valuation:
    """A network, its equilibrium (when solved here) and its simulated values."""

    network: NetworkSpec
    estimate: ValueEstimate
    equilibrium: PathEquilibrium | None = None

    @property
    def policies(self) -> dict[int, LadderPolicy]:
        return self.equilibrium.policies if self.equilibrium else {}


@dataclass(frozen=True)
class Dominance:
    """Paired comparison ``a - b`` of a metric; ``verdict`` names the winner or is indeterminate."""

    a: str
    b: str
    metric: str
    diff: float
    se: float
    ci: tuple[float, float]
    verdict: str


@dataclass
class TopologyReport:
    values: dict[str, dict[str, float]] = field(default_factory=dict)
    dominance: list[Dominance] = field(default_factory=list)
    marginals: dict[str, dict] = field(default_factory=dict)
    notes: dict[str, object] = field(default_factory=dict)
    valuations: dict[str, Valuation] = field(default_factory=dict)

    def add(self, name: str, val: Valuation) -> None:
        est = val.estimate
        self.values[name] = {"V0": est.v0, "V0_se": est.v0_se, "W": est.w, "W_se": est.w_se,
                             "link_cost": est.link_cost}
        self.valuations[name] = val

    def rows(self, baseline: str | None = None) -> list[tuple[str, str, float, float, str]]:
        """Long-form rows ``(topology, metric, estimate, se, paired baseline)``."""
        out = []
        for name, v in self.values.items():
            out.append((name, "V0", v["V0"], v["V0_se"], ""))
            out.append((name, "W", v["W"], v["W_se"], ""))
        for d in self.dominance:
            out.append((d.a, f"{d.metric}_diff", d.diff, d.se, d.b))
        return out


def _verdict(a: str, b: str, ci: tuple[float, float]) -> str:
    if ci[0] > 0:
        return a
    if ci[1] < 0:
        return b
    return "indeterminate at this budget"


def compare(report: TopologyReport, a: str, b: str, metric: str = "V0") -> Dominance:
    """Paired ``a - b`` comparison of ``V0`` or ``W``, appended to ``report``."""
    ea, eb = report.valuations[a].estimate, report.valuations[b].estimate
    if metric == "V0":
        dm = report.valuations[a].network.dm
        diff, se, ci = paired_difference(ea, eb, node=dm)
    elif metric == "W":
        diff, se, ci = paired_difference(ea, eb, social=True)
    else:
        raise ValueError(f"unknown metric {metric}")
    d = Dominance(a, b, metric, diff, se, ci, _verdict(a, b, ci))
    report.dominance.append(d)
    return d


def value_network(net: NetworkSpec, ou: OUParams, solver: SolverSettings, sim: SimSettings, seed: int,
                  policies: Mapping[int, LadderPolicy] | None = None, threads: int = 1) -> Valuation:
    """Solve (unless ``policies`` are given) and simulate one network."""
    eq = None
    if policies is None:
        if not supported_topology(net):
            raise PathError("unsupported_topology", "supply policies to value this network")
        eq = solve_network(net, ou, solver)
        policies = eq.policies
    cfg = ScenarioConfig(ou, net, solver, sim, seed)
    return Valuation(net, estimate_values(cfg, policies, threads=threads), eq)


# ---------------------------------------------------------------------------
# tree sweeps


def bias_sorted(intermediaries: Sequence[AgentSpec]) -> list[AgentSpec]:
    """Most moderate bias next to the expert, most extreme next to the DM (ties by id)."""
    return sorted(intermediaries, key=lambda a: (abs(a.bias), a.id))


def _perm_name(perm: Sequence[AgentSpec]) -> str:
    return "line:" + "-".join(str(a.id) for a in perm)


def sweep_trees(expert: AgentSpec, intermediaries: Sequence[AgentSpec], dm: AgentSpec, ou: OUParams,
                solver: SolverSettings, sim: SimSettings, seed: int, threads: int = 1) -> TopologyReport:
    """Every ordering of the intermediaries as a line, valued with common random numbers.

    The report's notes hold the argmax ordering, the bias-sorted ordering,
    whether any ordering beats the sorted one at 95% (``sorted_is_max``), and
    the per-ordering steepness (the largest per-row inaction width along the
    path, from the solver without Monte Carlo noise).
    """
    if len(intermediaries) > 6:
        raise ValueError("tree sweeps are limited to 6 intermediaries")
    report = TopologyReport()
    steep = {}
    for perm in itertools.permutations(intermediaries):
        net = line_network(expert, list(perm), dm)
        val = value_network(net, ou, solver, sim, seed, threads=threads)
        name = _perm_name(perm)
        report.add(name, val)
        steep[name] = max(float(np.max(val.equilibrium.policies[a.id].inaction_width())) for a in perm) if perm else 0.0
    sorted_name = _perm_name(bias_sorted(intermediaries))
    for name in report.values:
        if name != sorted_name:
            compare(report, name, sorted_name, "V0")
    argmax = max(report.values, key=lambda n: report.values[n]["V0"])
    beaten = [d.a for d in report.dominance if d.verdict == d.a]
    report.notes.update(
        sorted=sorted_name, argmax=argmax, sorted_is_argmax=argmax == sorted_name,
        sorted_is_max=not beaten, beaten_by=beaten, steepness=steep,
        sorted_is_steepest=all(steep[sorted_name] <= s + solver.tol_pasting for s in steep.values()),
        aligned=check_bias_aligned([a.bias for a in intermediaries] + [expert.bias]),
        degenerate=len(report.values) == 1,
    )
    return report


# ---------------------------------------------------------------------------
# line versus star


def star_network(expert: AgentSpec, i: AgentSpec, j: AgentSpec, dm: AgentSpec, link_cost: float = 0.0) -> NetworkSpec:
    links = [(expert.id, i.id), (expert.id, j.id), (i.id, dm.id), (j.id, dm.id)]
    return NetworkSpec((expert, i, j, dm), frozenset(links), tuple(((l, float(link_cost)) for l in sorted(links))))


def compare_line_star(expert: AgentSpec, i: AgentSpec, j: AgentSpec, dm: AgentSpec, ou: OUParams,
                      solver: SolverSettings, sim: SimSettings, seed: int, link_cost: float = 0.0,
                      threads: int = 1) -> TopologyReport:
    """Ordered line ``e -> i -> j -> 0`` against the two-route star ``{e -> i -> 0, e -> j -> 0}``.

    ``i`` should be the agent with the larger reputational weight. The star
    has one more link than the line; with a common per-link cost the social
    comparison is net of that extra cost.
    """
    if i.bias != j.bias:
        raise PathError("hypothesis_violated", f"biases differ: {i.bias} vs {j.bias}")
    report = TopologyReport()
    line = line_network(expert, [i, j], dm, link_cost)
    star = star_network(expert, i, j, dm, link_cost)
    report.add("line", value_network(line, ou, solver, sim, seed, threads=threads))
    report.add("star", value_network(star, ou, solver, sim, seed, threads=threads))
    compare(report, "star", "line", "V0")
    compare(report, "star", "line", "W")
    report.notes.update(beta_ratio=i.beta / j.beta if j.beta > 0 else math.inf,
                        theorem_applies=i.beta > j.beta, extra_link_cost=link_cost)
    return report


# ---------------------------------------------------------------------------
# link marginal values


@dataclass(frozen=True)
class LinkMarginal:
    """CRN-paired change from adding ``link``: per-node values and the social value."""

    link: tuple[int, int]
    cost: float
    delta: dict[int, tuple[float, float]]
    delta_soc: float
    delta_soc_se: float
    identity_gap: float


def link_marginal(link: tuple[int, int], net: NetworkSpec, ou: OUParams, solver: SolverSettings, sim: SimSettings,
                  seed: int, cost: float = 0.0, base: Valuation | None = None, threads: int = 1,
                  report: TopologyReport | None = None) -> LinkMarginal:
    """Value of adding ``link`` (at ``cost``) to ``net``.

    Per-node entries are gross value changes ``V_k(G + l) - V_k(G)``; the social
    entry is ``W(G + l) - W(G)``, which includes the new link's cost. The
    identity gap compares the paired social mean with the difference of the
    stored ``W`` estimates and is zero up to rounding.
    """
    plus = NetworkSpec(net.nodes, net.links | {link}, tuple(sorted(net.link_costs + ((link, float(cost)),))))
    for g in (net, plus):
        if not supported_topology(g):
            raise PathError("unsupported_topology", f"links {sorted(g.links)}")
    base = base or value_network(net, ou, solver, sim, seed, threads=threads)
    added = value_network(plus, ou, solver, sim, seed, threads=threads)
    delta = {}
    for k in sorted(base.estimate.means):
        d, se, _ = paired_difference(added.estimate, base.estimate, node=k)
        delta[k] = (d, se)
    dsoc, dsoc_se, _ = paired_difference(added.estimate, base.estimate, social=True)
    gap = abs(dsoc - (added.estimate.w - base.estimate.w))
    if report is not None:
        report.add("G", base)
        report.add("G+l", added)
        report.marginals[f"{link[0]}->{link[1]}"] = {"delta": delta, "delta_soc": dsoc, "se": dsoc_se}
    return LinkMarginal(link, float(cost), delta, dsoc, dsoc_se, gap)
