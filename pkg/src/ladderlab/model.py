"""Primitives, scenario configuration, validation and graph utilities.

All types are frozen dataclasses. A scenario round-trips through JSON with
strict keys: an unknown key anywhere in the document raises ``ConfigError``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from itertools import permutations
from typing import Any, Iterable, Sequence

EXPERT = "expert"
INTERMEDIARY = "intermediary"
DM = "decision_maker"
ROLES = (EXPERT, INTERMEDIARY, DM)


class ConfigError(ValueError):
    """Raised for malformed scenario documents (unknown keys, bad types)."""


class NotATreeError(ValueError):
    """Raised by tree-only analyses when given a graph that is not an arborescence."""

    code = "not_a_tree"


@dataclass(frozen=True)
class OUParams:
    kappa: float
    xbar: float
    sigma: float
    rho: float
    news_precision: float = 0.0

    @property
    def stationary_variance(self) -> float:
        return self.sigma**2 / (2.0 * self.kappa)


@dataclass(frozen=True)
class ReputationParams:
    pi0: float = 0.5
    p_high: float = 0.9
    p_low: float = 0.3
    phi_low: float = 0.0
    phi_high: float = 1.0


@dataclass(frozen=True)
class AgentSpec:
    id: int
    role: str
    alpha: float = 0.0
    bias: float = 0.0
    beta: float = 0.0
    lambda_bar: float = 0.0
    rep: ReputationParams | None = None


@dataclass(frozen=True)
class NetworkSpec:
    nodes: tuple[AgentSpec, ...]
    links: frozenset[tuple[int, int]]
    link_costs: tuple[tuple[tuple[int, int], float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "links", frozenset(tuple(l) for l in self.links))
        costs = self.link_costs
        if isinstance(costs, dict):
            costs = costs.items()
        object.__setattr__(
            self, "link_costs", tuple(sorted((tuple(k), float(v)) for k, v in costs))
        )

    def agent(self, node_id: int) -> AgentSpec:
        for a in self.nodes:
            if a.id == node_id:
                return a
        raise KeyError(node_id)

    @property
    def ids(self) -> list[int]:
        return sorted(a.id for a in self.nodes)

    @property
    def dm(self) -> int:
        return next(a.id for a in self.nodes if a.role == DM)

    @property
    def experts(self) -> list[int]:
        return sorted(a.id for a in self.nodes if a.role == EXPERT)

    @property
    def active(self) -> list[int]:
        """Non-DM node ids."""
        return sorted(a.id for a in self.nodes if a.role != DM)

    def cost(self, link: tuple[int, int]) -> float:
        return dict(self.link_costs).get(tuple(link), 0.0)

    def out_neighbors(self, i: int) -> list[int]:
        return sorted(j for (k, j) in self.links if k == i)

    def in_neighbors(self, i: int) -> list[int]:
        return sorted(k for (k, j) in self.links if j == i)

    def with_links(self, links: Iterable[tuple[int, int]]) -> "NetworkSpec":
        links = frozenset(tuple(l) for l in links)
        costs = tuple((l, c) for l, c in self.link_costs)
        return NetworkSpec(self.nodes, links, costs)

    def with_nodes(self, nodes: Sequence[AgentSpec]) -> "NetworkSpec":
        return NetworkSpec(tuple(nodes), self.links, self.link_costs)


@dataclass(frozen=True)
class SolverSettings:
    m_grid: int = 401
    r_grid: int = 21
    m_span_sd: float = 5.0
    tol_value: float = 1e-7
    tol_pasting: float = 1e-3
    max_sweeps: int = 100_000
    threshold_cap: int = 8
    quad_nodes: int = 15


@dataclass(frozen=True)
class SimSettings:
    dt: float | None = None
    horizon: float | None = None
    reps: int = 2000
    crn: bool = True
    windows: tuple[tuple[int, float, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(
            self, "windows", tuple((int(a), float(s), float(d)) for a, s, d in self.windows)
        )

    def resolved_dt(self, ou: OUParams) -> float:
        return self.dt if self.dt is not None else 0.01 / ou.kappa

    def resolved_horizon(self, ou: OUParams) -> float:
        if self.horizon is not None:
            return self.horizon
        return math.log(1e4) / ou.rho


@dataclass(frozen=True)
class ScenarioConfig:
    ou: OUParams
    network: NetworkSpec
    solver: SolverSettings = field(default_factory=SolverSettings)
    sim: SimSettings = field(default_factory=SimSettings)
    seed: int = 0

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def with_agent(self, node_id: int, **changes) -> "ScenarioConfig":
        nodes = [
            dataclasses.replace(a, **changes) if a.id == node_id else a
            for a in self.network.nodes
        ]
        return self.replace(network=self.network.with_nodes(nodes))

    def with_ou(self, **changes) -> "ScenarioConfig":
        return self.replace(ou=dataclasses.replace(self.ou, **changes))

    def config_hash(self) -> str:
        return hashlib.sha256(dumps(self).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    code: str
    detail: str = ""

    def __str__(self):
        return f"{self.code}: {self.detail}" if self.detail else self.code


def _check_rep(prefix: str, rep: ReputationParams) -> list[Violation]:
    out = []
    if not 0.0 < rep.pi0 < 1.0:
        out.append(Violation(f"{prefix}.pi0_out_of_range", f"pi0={rep.pi0}"))
    if not 0.0 <= rep.p_low < rep.p_high <= 1.0:
        out.append(Violation(f"{prefix}.propensities_unordered", f"p_low={rep.p_low}, p_high={rep.p_high}"))
    if not rep.phi_high > rep.phi_low >= 0.0:
        out.append(Violation(f"{prefix}.surplus_unordered", f"phi_low={rep.phi_low}, phi_high={rep.phi_high}"))
    return out


def validate(config: ScenarioConfig) -> list[Violation]:
    """Return every violated invariant; an empty list means the config is valid."""
    v: list[Violation] = []
    ou = config.ou
    if not ou.kappa > 0:
        v.append(Violation("ou.kappa_nonpositive", f"kappa={ou.kappa}"))
    if not ou.sigma > 0:
        v.append(Violation("ou.sigma_nonpositive", f"sigma={ou.sigma}"))
    if not ou.rho > 0:
        v.append(Violation("ou.rho_nonpositive", f"rho={ou.rho}"))
    if not ou.news_precision >= 0:
        v.append(Violation("ou.news_precision_negative", f"h={ou.news_precision}"))

    net = config.network
    ids = [a.id for a in net.nodes]
    if len(set(ids)) != len(ids):
        v.append(Violation("network.duplicate_ids"))
    dms = [a for a in net.nodes if a.role == DM]
    if len(dms) != 1:
        v.append(Violation("network.dm_count", f"found {len(dms)} decision makers"))
    for a in net.nodes:
        p = f"agent[{a.id}]"
        if a.role not in ROLES:
            v.append(Violation(f"{p}.unknown_role", a.role))
            continue
        if a.role == DM:
            if a.bias != 0 or a.beta != 0 or a.lambda_bar != 0 or a.rep is not None:
                v.append(Violation(f"{p}.dm_has_agent_fields"))
            continue
        if not a.alpha > 0:
            v.append(Violation(f"{p}.alpha_nonpositive", f"alpha={a.alpha}"))
        if not a.lambda_bar > 0:
            v.append(Violation(f"{p}.lambda_bar_nonpositive", f"lambda_bar={a.lambda_bar}"))
        if a.beta < 0:
            v.append(Violation(f"{p}.beta_negative", f"beta={a.beta}"))
        if a.rep is None:
            v.append(Violation(f"{p}.rep_missing"))
        else:
            v.extend(_check_rep(f"{p}.rep", a.rep))
    if not any(a.role == EXPERT for a in net.nodes):
        v.append(Violation("network.no_expert"))
    idset = set(ids)
    for (i, j) in sorted(net.links):
        if i == j:
            v.append(Violation("network.self_link", f"{i}->{j}"))
        if i not in idset or j not in idset:
            v.append(Violation("network.dangling_link", f"{i}->{j}"))
    for (l, c) in net.link_costs:
        if c < 0:
            v.append(Violation("network.negative_cost", f"{l}: {c}"))
        if l not in net.links:
            v.append(Violation("network.cost_for_missing_link", f"{l}"))
    if len(dms) == 1 and not any(x.code == "network.dangling_link" for x in v):
        for e in net.experts:
            if not enumerate_simple_paths(net, e, dms[0].id):
                v.append(Violation("network.infeasible", f"expert {e} has no path to DM"))

    s = config.solver
    if s.m_grid < 201:
        v.append(Violation("solver.m_grid_too_small", f"{s.m_grid} < 201"))
    if s.r_grid < 21:
        v.append(Violation("solver.r_grid_too_small", f"{s.r_grid} < 21"))
    sim = config.sim
    if sim.dt is not None and not sim.dt > 0:
        v.append(Violation("sim.dt_nonpositive"))
    if sim.horizon is not None and not sim.horizon > 0:
        v.append(Violation("sim.horizon_nonpositive"))
    if sim.reps < 1:
        v.append(Violation("sim.reps_nonpositive"))
    for (a, start, dur) in sim.windows:
        if a not in idset:
            v.append(Violation("sim.window_unknown_agent", str(a)))
        if dur <= 0 or start < 0:
            v.append(Violation("sim.window_malformed", f"({a}, {start}, {dur})"))
    if not isinstance(config.seed, int) or isinstance(config.seed, bool):
        v.append(Violation("seed.missing"))
    return v


# ---------------------------------------------------------------------------
# graph utilities


def enumerate_simple_paths(net: NetworkSpec, source: int, target: int) -> list[list[int]]:
    """All simple directed paths from ``source`` to ``target`` in lexicographic order."""
    adj = {i: net.out_neighbors(i) for i in net.ids}
    if source not in adj or target not in adj:
        return []
    out: list[list[int]] = []
    stack = [source]
    onpath = {source}

    def dfs(u):
        if u == target:
            out.append(list(stack))
            return
        for w in adj[u]:
            if w not in onpath:
                stack.append(w)
                onpath.add(w)
                dfs(w)
                stack.pop()
                onpath.discard(w)

    if source == target:
        return [[source]]
    dfs(source)
    return sorted(out)


def check_bias_aligned(biases: Sequence[float]) -> bool:
    """True when all biases share a weak sign (zero is aligned with both)."""
    if len(biases) == 0:
        raise ValueError("empty bias list")
    return all(b >= 0 for b in biases) or all(b <= 0 for b in biases)


def is_arborescence(net: NetworkSpec) -> bool:
    """Every non-DM node has exactly one out-link and a unique path to the DM."""
    dm = net.dm
    if net.out_neighbors(dm):
        return False
    for i in net.active:
        if len(net.out_neighbors(i)) != 1:
            return False
        seen, u = set(), i
        while u != dm:
            if u in seen:
                return False
            seen.add(u)
            nxt = net.out_neighbors(u)
            if len(nxt) != 1:
                return False
            u = nxt[0]
    return True


def check_bias_monotone_tree(net: NetworkSpec) -> bool:
    """True iff every simple expert-to-DM path of the arborescence is bias-aligned."""
    if not is_arborescence(net):
        raise NotATreeError("not_a_tree")
    dm = net.dm
    for e in net.experts:
        for path in enumerate_simple_paths(net, e, dm):
            if not check_bias_aligned([net.agent(k).bias for k in path[:-1]]):
                return False
    return True


def line_network(expert: AgentSpec, intermediaries: Sequence[AgentSpec], dm: AgentSpec,
                 link_cost: float = 0.0) -> NetworkSpec:
    """Chain expert -> intermediaries (in the given order) -> DM."""
    order = [expert.id] + [a.id for a in intermediaries] + [dm.id]
    links = [(order[k], order[k + 1]) for k in range(len(order) - 1)]
    return NetworkSpec(
        (expert, *intermediaries, dm), frozenset(links), tuple((l, link_cost) for l in links)
    )


def tree_permutations(intermediaries: Sequence[AgentSpec]):
    yield from permutations(intermediaries)


# ---------------------------------------------------------------------------
# JSON


_TYPES = {
    "ou": OUParams,
    "solver": SolverSettings,
    "sim": SimSettings,
}


def _strict(cls, data: dict[str, Any], where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    return data


def _agent_from(d: dict, where: str) -> AgentSpec:
    _strict(AgentSpec, d, where)
    d = dict(d)
    if d.get("rep") is not None:
        d["rep"] = ReputationParams(**_strict(ReputationParams, d["rep"], f"{where}.rep"))
    return AgentSpec(**d)


def config_from_dict(doc: dict[str, Any]) -> ScenarioConfig:
    _strict(ScenarioConfig, doc, "scenario")
    if "seed" not in doc:
        raise ConfigError("scenario: seed is mandatory")
    if "ou" not in doc or "network" not in doc:
        raise ConfigError("scenario: ou and network are required")
    ou = OUParams(**_strict(OUParams, doc["ou"], "ou"))
    nd = _strict(NetworkSpec, doc["network"], "network")
    nodes = tuple(_agent_from(a, f"network.nodes[{k}]") for k, a in enumerate(nd.get("nodes", [])))
    links = frozenset(tuple(l) for l in nd.get("links", []))
    costs = []
    for entry in nd.get("link_costs", []):
        if len(entry) != 3:
            raise ConfigError("network.link_costs: entries are [from, to, cost]")
        costs.append(((int(entry[0]), int(entry[1])), float(entry[2])))
    net = NetworkSpec(nodes, links, tuple(costs))
    solver = SolverSettings(**_strict(SolverSettings, doc.get("solver", {}), "solver"))
    simd = dict(_strict(SimSettings, doc.get("sim", {}), "sim"))
    sim = SimSettings(**simd)
    return ScenarioConfig(ou=ou, network=net, solver=solver, sim=sim, seed=doc["seed"])


def config_to_dict(config: ScenarioConfig) -> dict[str, Any]:
    net = config.network
    nodes = []
    for a in net.nodes:
        d = dataclasses.asdict(a)
        nodes.append(d)
    return {
        "ou": dataclasses.asdict(config.ou),
        "network": {
            "nodes": nodes,
            "links": [list(l) for l in sorted(net.links)],
            "link_costs": [[l[0], l[1], c] for l, c in net.link_costs],
        },
        "solver": dataclasses.asdict(config.solver),
        "sim": {**dataclasses.asdict(config.sim), "windows": [list(w) for w in config.sim.windows]},
        "seed": config.seed,
    }


def dumps(config: ScenarioConfig) -> str:
    return json.dumps(config_to_dict(config), sort_keys=True, indent=2)


def loads(text: str) -> ScenarioConfig:
    return config_from_dict(json.loads(text))


def load(path) -> ScenarioConfig:
    with open(path) as fh:
        return loads(fh.read())


def save(config: ScenarioConfig, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(config))
