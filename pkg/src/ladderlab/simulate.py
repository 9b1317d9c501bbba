"""Monte Carlo of the network disclosure game under fixed ladder policies.

The fundamental is advanced by exact OU transitions on a checkpoint grid of
step ``dt``; opportunities arrive by comparing each agent's integrated clock
intensity against unit-exponential budgets, so a clock that is switched off
(or silenced by an announced window) accrues no exposure. Opportunities are
resolved at the end of the step in which they arrive.

Replications are vectorized. Every replication owns its random streams:

* the fundamental's (and the news channel's) driving noise is keyed by the
  antithetic pair ``rep // 2``; odd replications use the negated draws;
* each agent's exponential budgets are keyed by ``(rep, agent id)``.

Streams are derived from the scenario seed with :class:`numpy.random.SeedSequence`
spawn keys, so results do not depend on how replications are split into
blocks or threads, and configurations compared with the same seed share
their draws (common random numbers).

Signal semantics: the expert observes ``X`` continuously and discloses its
current value. An intermediary holds the newest signal it has received and
passes it on once, at one of its own opportunities. A receiver keeps a signal
only if it is newer than the one it holds, and the DM only updates on a signal
newer than anything it has seen. A signal observed ``age`` ago moves the DM to
the OU-decayed mean with the matching conditional variance.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import expm

from .belief import ou_mean, ou_var, riccati_rhs
from .model import EXPERT, ScenarioConfig, validate
from .qvi import CompiledLadder, LadderPolicy
from .reputation import rep_from_pi

_CHUNK = 512
_STREAM_X, _STREAM_NEWS, _STREAM_CLOCK = 0, 1, 2


class SimulationError(RuntimeError):
    def __init__(self, code: str, detail: str = "", trace=None):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code
        self.trace = trace


@dataclass(frozen=True)
class TraceEvent:
    time: float
    kind: str
    agent: int
    payload: dict = field(default_factory=dict)


@dataclass
class EventTrace:
    """One replication: events in time order, discounted payoffs and deliveries.

    ``path`` holds the checkpoint grid: times, ``X``, ``m``, ``v`` and the
    posterior of every agent (one column per entry of ``agents``).
    """

    events: list[TraceEvent]
    payoffs: dict[int, float]
    deliveries: list[tuple[float, float]]
    path: dict[str, np.ndarray]
    agents: tuple[int, ...]
    rep: int
    seed: int

    def of_kind(self, kind: str) -> list[TraceEvent]:
        return [e for e in self.events if e.kind == kind]


@dataclass
class SimBatch:
    """Vectorized output of a block of replications.

    ``payoffs`` maps node id to per-replication discounted payoffs. Disclosure
    records are flat arrays (one entry per disclosure by any agent).
    """

    reps: np.ndarray
    payoffs: dict[int, np.ndarray]
    first_delivery: np.ndarray
    first_origin: np.ndarray
    disclosures: dict[str, np.ndarray]
    horizon: float
    dt: float
    seed: int
    tail_bound: float


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=tuple(key))))


def _check(config: ScenarioConfig, policies: Mapping[int, LadderPolicy], allow_infeasible: bool = False) -> None:
    # the simulator accepts silent agents (zero clock rate), which equilibrium solving rejects,
    # and, on request, networks in which no signal can reach the DM
    skip = ("lambda_bar_nonpositive",) + (("network.infeasible",) if allow_infeasible else ())
    bad = [v for v in validate(config) if not v.code.endswith(skip)]
    if bad:
        raise SimulationError("invalid_config", "; ".join(str(v) for v in bad))
    if config.seed < 0:
        raise SimulationError("invalid_config", "seed must be non-negative")
    for i in config.network.active:
        if config.network.agent(i).lambda_bar < 0:
            raise SimulationError("invalid_config", f"agent {i} has a negative clock rate")
        if i not in policies:
            raise SimulationError("policy_missing", f"no policy for agent {i}")


def _window_mask(windows, agent: int, times: np.ndarray) -> np.ndarray:
    out = np.zeros(times.shape, dtype=bool)
    for a, start, dur in windows:
        if a == agent:
            out |= (times >= start) & (times < start + dur)
    return out


class _Budgets:
    """Pre-drawn unit-exponential budgets per (replication, agent), refilled on demand."""

    def __init__(self, seed: int, reps: np.ndarray, agent: int, cap: int):
        self.gens = [_stream(seed, _STREAM_CLOCK, int(r), agent) for r in reps]
        self.table = np.stack([g.standard_exponential(cap) for g in self.gens]) if len(reps) else np.zeros((0, cap))
        self.ptr = np.zeros(len(reps), dtype=np.int64)
        self.rem = self.table[:, 0].copy()

    def advance(self, idx: np.ndarray) -> None:
        self.ptr[idx] += 1
        full = idx[self.ptr[idx] >= self.table.shape[1]]
        if full.size:
            extra = np.stack([self.gens[r].standard_exponential(self.table.shape[1]) for r in range(len(self.gens))])
            self.table = np.concatenate([self.table, extra], axis=1)
        self.rem[idx] += self.table[idx, self.ptr[idx]]


def _engine(config: ScenarioConfig, policies: Mapping[int, LadderPolicy], reps: np.ndarray,
            record_trace: bool = False, deleted: Sequence[tuple[int, float, float]] = ()):
    """Run the replications ``reps``; returns a :class:`SimBatch` (and trace data when asked).

    ``deleted`` lists ``(agent, start, end)`` intervals during which the agent is
    removed from the network: it has no opportunities and relays nothing, but
    its clock keeps running and its reputation keeps its drift. It exists to
    build the counterfactual path for the local-silence check.
    """
    ou, net, sim = config.ou, config.network, config.sim
    seed = int(config.seed)
    dt = float(sim.resolved_dt(ou))
    T = float(sim.resolved_horizon(ou))
    n_steps = int(math.ceil(T / dt - 1e-9))
    R = len(reps)
    dm = net.dm
    act = list(net.active)
    K = len(act)
    agents = [net.agent(i) for i in act]
    idx_of = {i: k for k, i in enumerate(act)}
    comp: list[CompiledLadder] = [policies[i].compile() for i in act]
    is_exp = np.array([a.role == EXPERT for a in agents])
    lam = np.array([a.lambda_bar for a in agents])
    receivers = [net.out_neighbors(i) for i in act]
    times = np.arange(n_steps + 1) * dt
    win = np.stack([_window_mask(sim.windows, i, times) for i in act]) if K else np.zeros((0, n_steps + 1), bool)
    gone = np.zeros_like(win)
    for a, s0, s1 in deleted:
        gone[idx_of[a]] |= (times >= s0) & (times < s1)

    vbar = ou.sigma**2 / (2.0 * ou.kappa)
    decay = math.exp(-ou.kappa * dt)
    step_sd = math.sqrt(ou_var(ou, dt))
    h = ou.news_precision
    disc_w = np.exp(-ou.rho * times)

    pairs = np.unique(reps // 2)
    pair_pos = np.searchsorted(pairs, reps // 2)
    sign = np.where(reps % 2 == 0, 1.0, -1.0)
    gx = [_stream(seed, _STREAM_X, int(q)) for q in pairs]
    gn = [_stream(seed, _STREAM_NEWS, int(q)) for q in pairs] if h > 0 else []
    x0 = np.array([g.standard_normal() for g in gx])
    X = ou.xbar + math.sqrt(vbar) * sign * x0[pair_pos]
    m = np.full(R, ou.xbar)
    v = np.full(R, vbar)
    dm_t = np.full(R, -np.inf)
    pi = np.array([[a.rep.pi0] * R for a in agents]).reshape(K, R)
    hold = np.repeat(is_exp[:, None], R, axis=1)
    sig_x = np.zeros((K, R))
    sig_t = np.full((K, R), -np.inf)
    budgets = [_Budgets(seed, reps, i, int(lam[k] * T * 1.3 + 32)) for k, i in enumerate(act)]
    first_del = np.full(R, np.inf)
    first_org = np.full(R, np.nan)
    recs: dict[str, list[np.ndarray]] = {k: [] for k in ("rep", "time", "agent", "to_dm", "jump", "age", "since")}

    node_ids = list(net.ids)
    acc = {i: np.zeros(R) for i in node_ids}

    def rcap(k):
        a = agents[k]
        return rep_from_pi(a.rep, pi[k])

    def xhat(k, t):
        if is_exp[k]:
            return X
        return np.where(hold[k], ou_mean(ou, sig_x[k], t - sig_t[k]), m)

    def flows():
        err = m - X
        out = {dm: -(err**2)}
        for k, a in enumerate(agents):
            out[act[k]] = -a.alpha * (err - a.bias) ** 2 + a.beta * rcap(k)
        return out

    tr_events: list[TraceEvent] = []
    tr_path = None
    if record_trace:
        tr_path = {"t": times.copy(), "X": np.empty(n_steps + 1), "m": np.empty(n_steps + 1),
                   "v": np.empty(n_steps + 1), "pi": np.empty((n_steps + 1, K))}
        prev_on = np.zeros(K, dtype=bool)
        prev_win = np.zeros(K, dtype=bool)

    f0 = flows()
    max_flow = max(float(np.max(np.abs(f))) for f in f0.values()) if R else 0.0
    zx = zn = None
    for s in range(n_steps):
        c = s % _CHUNK
        if c == 0:
            width = min(_CHUNK, n_steps - s)
            zx = np.stack([g.standard_normal(width) for g in gx])[pair_pos] * sign[:, None]
            if h > 0:
                zn = np.stack([g.standard_normal(width) for g in gn])[pair_pos] * sign[:, None]
        t, t1 = times[s], times[s + 1]
        if record_trace:
            tr_path["X"][s], tr_path["m"][s], tr_path["v"][s] = X[0], m[0], v[0]
            tr_path["pi"][s] = pi[:, 0]
            tr_events.append(TraceEvent(float(t), "checkpoint", -1, {"X": float(X[0]), "m": float(m[0]), "v": float(v[0])}))
        # regimes over the step, read at its start
        on = np.zeros((K, R), dtype=bool)
        presc = np.zeros((K, R), dtype=bool)
        for k in range(K):
            mc = ou.xbar + m - xhat(k, t)
            r = rcap(k)
            on[k] = comp[k].clock_on(mc, r) & ~win[k, s]
            presc[k] = on[k] & hold[k] & comp[k].discloses(mc, r)
            if record_trace:
                if win[k, s] != prev_win[k]:
                    tr_events.append(TraceEvent(float(t), "window_start" if win[k, s] else "window_end", act[k]))
                    prev_win[k] = win[k, s]
                if on[k, 0] != prev_on[k]:
                    tr_events.append(TraceEvent(float(t), "clock_switch", act[k], {"on": bool(on[k, 0])}))
                    prev_on[k] = on[k, 0]
        arrivals = []
        for k in range(K):
            b = budgets[k]
            if lam[k] > 0:
                b.rem -= lam[k] * dt * on[k]
            hit = np.flatnonzero(b.rem <= 0.0)
            count = np.zeros(R, dtype=np.int64)
            while hit.size:
                count[hit] += 1
                b.advance(hit)
                hit = hit[b.rem[hit] <= 0.0]
            arrivals.append(count)
        for k in range(K):
            a = agents[k]
            drift = presc[k] & (pi[k] > 0) & (pi[k] < 1)
            if drift.any():
                cfac = math.exp(lam[k] * (a.rep.p_high - a.rep.p_low) * dt)
                p = pi[k, drift]
                pi[k, drift] = 1.0 / (1.0 + (1.0 - p) / p * cfac)
        # fundamental and public belief
        Xn = ou.xbar + decay * (X - ou.xbar) + step_sd * zx[:, c]
        if h > 0:
            dz = h * X * dt + math.sqrt(dt) * zn[:, c]
            m = m + ou.kappa * (ou.xbar - m) * dt + h * v * (dz - h * m * dt)
            v = np.maximum(v + riccati_rhs(ou, v) * dt, 0.0)
        else:
            m = ou.xbar + decay * (m - ou.xbar)
            v = vbar + (v - vbar) * decay**2
        X = Xn
        f1 = flows()
        for i in node_ids:
            acc[i] += 0.5 * dt * (disc_w[s] * f0[i] + disc_w[s + 1] * f1[i])
        # opportunities, resolved in ascending agent id
        jumped = False
        for k in range(K):
            arr = arrivals[k] > 0
            if not arr.any():
                continue
            if gone[k, s]:
                continue
            if record_trace and arr[0]:
                tr_events.append(TraceEvent(float(t1), "opportunity", act[k], {"count": int(arrivals[k][0])}))
            mc = ou.xbar + m - xhat(k, t1)
            go = arr & hold[k] & comp[k].discloses(mc, rcap(k))
            sel = np.flatnonzero(go)
            if sel.size == 0:
                continue
            jumped = True
            sx = X[sel] if is_exp[k] else sig_x[k, sel]
            st = np.full(sel.size, t1) if is_exp[k] else sig_t[k, sel]
            to_dm = np.zeros(sel.size, dtype=bool)
            jump = np.full(sel.size, np.nan)
            since = np.full(sel.size, np.nan)
            dm_before = m.copy()
            for j in receivers[k]:
                if j == dm:
                    newer = st > dm_t[sel]
                    tgt = sel[newer]
                    age = t1 - st[newer]
                    since[newer] = np.where(np.isfinite(dm_t[tgt]), t1 - dm_t[tgt], t1)
                    m[tgt] = ou_mean(ou, sx[newer], age)
                    v[tgt] = ou_var(ou, age)
                    dm_t[tgt] = st[newer]
                    jump[newer] = m[tgt] - dm_before[tgt]
                    to_dm[newer] = True
                    first = tgt[np.isinf(first_del[tgt])]
                    first_org[first] = dm_t[first]
                    first_del[first] = t1
                    if record_trace and newer[0]:
                        tr_events.append(TraceEvent(float(t1), "delivery", dm, {"origin": float(st[0])}))
                else:
                    kj = idx_of[j]
                    newer = ~hold[kj, sel] | (st > sig_t[kj, sel])
                    tgt = sel[newer]
                    hold[kj, tgt] = True
                    sig_x[kj, tgt] = sx[newer]
                    sig_t[kj, tgt] = st[newer]
                    if record_trace and newer[0]:
                        tr_events.append(TraceEvent(float(t1), "relay", j,
                                                    {"from": act[k], "x": float(sx[0]), "origin": float(st[0])}))
            if record_trace:
                tr_events.append(TraceEvent(float(t1), "disclosure", act[k],
                                            {"x": float(sx[0]), "origin": float(st[0]), "to_dm": bool(to_dm[0]),
                                             "jump": float(jump[0])}))
            if not is_exp[k]:
                hold[k, sel] = False
            rp = agents[k].rep
            p = pi[k, sel]
            den = p * rp.p_high + (1 - p) * rp.p_low
            pi[k, sel] = np.where(den > 0, p * rp.p_high / np.where(den > 0, den, 1.0), p)
            recs["rep"].append(reps[sel])
            recs["time"].append(np.full(sel.size, t1))
            recs["agent"].append(np.full(sel.size, act[k]))
            recs["to_dm"].append(to_dm)
            recs["jump"].append(jump)
            recs["age"].append(t1 - st)
            recs["since"].append(since)
        f0 = flows() if jumped else f1
        if c == _CHUNK - 1 or s == n_steps - 1:
            if not (np.all(np.isfinite(m)) and np.all(np.isfinite(X))):
                raise SimulationError("nan_detected", f"non-finite state by t={t1:.4g}",
                                      trace=tr_events if record_trace else None)
            max_flow = max(max_flow, max(float(np.max(np.abs(f))) for f in f0.values()) if R else 0.0)
    if record_trace:
        tr_path["X"][n_steps], tr_path["m"][n_steps], tr_path["v"][n_steps] = X[0], m[0], v[0]
        tr_path["pi"][n_steps] = pi[:, 0]
    disclosures = {k: (np.concatenate(vv) if vv else np.zeros(0)) for k, vv in recs.items()}
    for key, dtype in (("rep", np.int64), ("agent", np.int64), ("to_dm", bool)):
        disclosures[key] = disclosures[key].astype(dtype)
    tail = max_flow * math.exp(-ou.rho * T) / ou.rho
    batch = SimBatch(np.asarray(reps), acc, first_del, first_org, disclosures, T, dt, seed, tail)
    if record_trace:
        return batch, tr_events, tr_path
    return batch


def _concat(batches: list[SimBatch]) -> SimBatch:
    if len(batches) == 1:
        return batches[0]
    b0 = batches[0]
    return SimBatch(
        np.concatenate([b.reps for b in batches]),
        {i: np.concatenate([b.payoffs[i] for b in batches]) for i in b0.payoffs},
        np.concatenate([b.first_delivery for b in batches]),
        np.concatenate([b.first_origin for b in batches]),
        {k: np.concatenate([b.disclosures[k] for b in batches]) for k in b0.disclosures},
        b0.horizon, b0.dt, b0.seed, max(b.tail_bound for b in batches),
    )


def run_batch(config: ScenarioConfig, policies: Mapping[int, LadderPolicy], reps: int | Sequence[int] | None = None,
              threads: int = 1, allow_infeasible: bool = False) -> SimBatch:
    """Simulate replications ``0..reps-1`` (or the given indices), split across ``threads`` blocks.

    Output is identical for every thread count because every replication's
    streams are keyed by its index.
    """
    _check(config, policies, allow_infeasible)
    if reps is None:
        reps = config.sim.reps
    rep_ids = np.arange(reps) if isinstance(reps, (int, np.integer)) else np.asarray(reps, dtype=np.int64)
    threads = max(1, min(int(threads), len(rep_ids)))
    blocks = [b for b in np.array_split(rep_ids, threads) if b.size]
    if len(blocks) == 1:
        return _engine(config, policies, blocks[0])
    with ThreadPoolExecutor(max_workers=threads) as pool:
        out = list(pool.map(lambda b: _engine(config, policies, b), blocks))
    return _concat(out)


def simulate_once(config: ScenarioConfig, policies: Mapping[int, LadderPolicy], rep: int = 0,
                  deleted: Sequence[tuple[int, float, float]] = ()) -> EventTrace:
    """Full event trace of replication ``rep``.

    ``deleted`` removes agents from the network over time intervals (see
    :func:`_engine`); it is meant for counterfactual comparisons only.
    """
    _check(config, policies)
    batch, events, path = _engine(config, policies, np.array([rep]), record_trace=True, deleted=deleted)
    deliveries = [(e.payload["origin"], e.time) for e in events if e.kind == "delivery"]
    payoffs = {i: float(p[0]) for i, p in batch.payoffs.items()}
    return EventTrace(events, payoffs, deliveries, path, tuple(config.network.active), rep, batch.seed)


# ---------------------------------------------------------------------------
# estimates


@dataclass
class ValueEstimate:
    """Mean discounted payoffs with antithetic-pair standard errors, plus V0 and W."""

    means: dict[int, float]
    se: dict[int, float]
    v0: float
    v0_se: float
    w: float
    w_se: float
    link_cost: float
    reps: int
    seed: int
    batch: SimBatch | None = None

    def per_rep(self, node: int) -> np.ndarray:
        return self.batch.payoffs[node]

    def w_per_rep(self) -> np.ndarray:
        return sum(self.batch.payoffs[i] for i in sorted(self.batch.payoffs)) - self.link_cost


def pair_units(reps: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Average each antithetic pair into one independent unit (order of ``reps`` irrelevant)."""
    q = np.asarray(reps) // 2
    keys, inv = np.unique(q, return_inverse=True)
    tot = np.zeros(keys.size)
    cnt = np.zeros(keys.size)
    np.add.at(tot, inv, x)
    np.add.at(cnt, inv, 1.0)
    return tot / cnt


def mean_se(reps: np.ndarray, x: np.ndarray) -> tuple[float, float]:
    """Mean over replications and its standard error from independent antithetic pairs."""
    x = np.asarray(x, dtype=float)
    order = np.argsort(reps, kind="stable")
    mean = math.fsum(x[order]) / x.size
    u = pair_units(np.asarray(reps)[order], x[order])
    se = float(np.std(u, ddof=1) / math.sqrt(u.size)) if u.size > 1 else math.inf
    return mean, se


def estimate_values(config: ScenarioConfig, policies: Mapping[int, LadderPolicy], reps: int | None = None,
                    threads: int = 1, batch: SimBatch | None = None, allow_infeasible: bool = False) -> ValueEstimate:
    """Ex-ante discounted payoff of every node, the DM's value ``V0`` and the social value ``W``.

    ``W`` sums every node's value (the DM included) and subtracts all link costs.
    """
    if batch is None:
        batch = run_batch(config, policies, reps, threads, allow_infeasible)
    means, ses = {}, {}
    for i in sorted(batch.payoffs):
        means[i], ses[i] = mean_se(batch.reps, batch.payoffs[i])
    cost = float(sum(c for _, c in config.network.link_costs))
    wrep = sum(batch.payoffs[i] for i in sorted(batch.payoffs)) - cost
    w, w_se = mean_se(batch.reps, wrep)
    dm = config.network.dm
    return ValueEstimate(means, ses, means[dm], ses[dm], w, w_se, cost, int(batch.reps.size), batch.seed, batch)


def paired_difference(a: ValueEstimate, b: ValueEstimate, node: int | None = None, social: bool = False,
                      z: float = 1.959963984540054) -> tuple[float, float, tuple[float, float]]:
    """CRN-paired difference ``a - b`` of a node's value (or ``W``) with a normal 95% interval."""
    if not np.array_equal(a.batch.reps, b.batch.reps):
        raise ValueError("paired comparison needs the same replications")
    if social:
        d = a.w_per_rep() - b.w_per_rep()
    else:
        d = a.per_rep(node) - b.per_rep(node)
    mean, se = mean_se(a.batch.reps, d)
    return mean, se, (mean - z * se, mean + z * se)


def no_information_value(config: ScenarioConfig) -> float:
    """DM value when nothing is ever disclosed: ``-int e^{-rho t} v(t) dt`` over the horizon.

    Uses the closed-form prior variance path (constant at the stationary
    variance when ``h = 0``); with a news channel the Riccati ODE is integrated.
    """
    ou = config.ou
    T = config.sim.resolved_horizon(ou)
    vbar = ou.sigma**2 / (2.0 * ou.kappa)
    if ou.news_precision == 0:
        return -vbar * (1.0 - math.exp(-ou.rho * T)) / ou.rho
    from scipy.integrate import solve_ivp

    sol = solve_ivp(lambda t, y: [riccati_rhs(ou, y[0]), -math.exp(-ou.rho * t) * y[0]], (0.0, T), [vbar, 0.0],
                    rtol=1e-10, atol=1e-12)
    return float(sol.y[1, -1])


# ---------------------------------------------------------------------------
# timing statistics


@dataclass(frozen=True)
class TimingSummary:
    """Inter-disclosure durations and direction-specific disclosure delays.

    ``up_delay`` and ``down_delay`` are mean waiting times to a disclosure
    that moves the public belief up (down): total observed time divided by
    the number of such disclosures, which stays meaningful when one
    direction is rare. ``up_delay_cond`` and ``down_delay_cond`` are the raw
    means of the time since the previous update, conditional on direction.
    ``up_minus_down_ci`` is a 95% bootstrap interval clustered on antithetic
    pairs.
    """

    n_events: int
    mean: float
    quantiles: dict[float, float]
    burstiness: float
    burstiness_se: float
    n_up: int
    n_down: int
    up_delay: float
    down_delay: float
    up_minus_down: float
    up_minus_down_ci: tuple[float, float]
    up_delay_cond: float
    down_delay_cond: float
    durations: np.ndarray


def _durations(batch: SimBatch, agent: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Times between successive DM belief updates in each replication, and their replication ids."""
    d = batch.disclosures
    sel = d["to_dm"] if agent is None else (d["to_dm"] & (d["agent"] == agent))
    reps, t = d["rep"][sel], d["time"][sel]
    order = np.lexsort((t, reps))
    reps, t = reps[order], t[order]
    same = reps[1:] == reps[:-1]
    return np.diff(t)[same], reps[1:][same]


def _burstiness(x: np.ndarray) -> float:
    mu, sd = x.mean(), x.std(ddof=1)
    return float((sd - mu) / (sd + mu))


def _direction_delays(exposure: np.ndarray, n_up: np.ndarray, n_down: np.ndarray) -> float:
    up = exposure.sum() / n_up.sum() if n_up.sum() else math.inf
    down = exposure.sum() / n_down.sum() if n_down.sum() else math.inf
    return up - down


def timing_statistics(batch: SimBatch, agent: int | None = None, min_reps: int = 100,
                      min_events: int = 20, boot: int = 400) -> TimingSummary:
    """Inter-disclosure durations at the DM, burstiness and sign-conditional delays.

    ``agent`` restricts the records to disclosures made by that agent.
    Standard errors and intervals resample antithetic pairs with a fixed
    bootstrap seed, so the summary is deterministic.
    """
    if batch.reps.size < min_reps:
        raise SimulationError("insufficient_traces", f"{batch.reps.size} < {min_reps} replications")
    d = batch.disclosures
    sel = d["to_dm"] if agent is None else (d["to_dm"] & (d["agent"] == agent))
    if int(sel.sum()) < min_events:
        raise SimulationError("insufficient_events", f"{int(sel.sum())} disclosure events")
    dur, dur_reps = _durations(batch, agent)
    if dur.size < 2:
        raise SimulationError("insufficient_events", "fewer than two inter-disclosure durations")
    keys, rep_cluster = np.unique(np.sort(batch.reps) // 2, return_inverse=True)
    nc = keys.size
    exposure = np.bincount(rep_cluster, minlength=nc) * batch.horizon
    jump, ev_cluster = d["jump"][sel], np.searchsorted(keys, d["rep"][sel] // 2)
    n_up = np.bincount(ev_cluster[jump > 0], minlength=nc).astype(float)
    n_down = np.bincount(ev_cluster[jump < 0], minlength=nc).astype(float)
    dur_cluster = np.searchsorted(keys, dur_reps // 2)
    by_cluster = [dur[dur_cluster == c] for c in range(nc)] if boot else []
    rng = np.random.default_rng(0)
    bursts, diffs = [], []
    for _ in range(boot):
        pick = rng.integers(0, nc, nc)
        x = np.concatenate([by_cluster[c] for c in pick])
        if x.size > 1:
            bursts.append(_burstiness(x))
        diffs.append(_direction_delays(exposure[pick], n_up[pick], n_down[pick]))
    diffs = np.asarray(diffs)
    since = d["since"][sel]
    up_delay = exposure.sum() / n_up.sum() if n_up.sum() else math.inf
    down_delay = exposure.sum() / n_down.sum() if n_down.sum() else math.inf
    # order statistics rather than interpolation: resamples without up- or down-moves give infinite delays
    ci = ((float(np.quantile(diffs, 0.025, method="lower")), float(np.quantile(diffs, 0.975, method="higher")))
          if diffs.size else (-math.inf, math.inf))
    qs = {p: float(np.quantile(dur, p)) for p in (0.1, 0.25, 0.5, 0.75, 0.9)}
    return TimingSummary(
        int(sel.sum()), float(dur.mean()), qs, _burstiness(dur),
        float(np.std(bursts, ddof=1)) if len(bursts) > 1 else math.inf,
        int(n_up.sum()), int(n_down.sum()), float(up_delay), float(down_delay), float(up_delay - down_delay), ci,
        float(since[jump > 0].mean()) if (jump > 0).any() else math.nan,
        float(since[jump < 0].mean()) if (jump < 0).any() else math.nan,
        dur,
    )


# ---------------------------------------------------------------------------
# delivery


@dataclass(frozen=True)
class DeliveryCheck:
    fraction: float
    ci: tuple[float, float]
    delays: np.ndarray
    horizon: float
    reps: int


def wilson_interval(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if n == 0:
        return (0.0, 1.0)
    p = k / n
    den = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return (max(0.0, centre - half), min(1.0, centre + half))


def delivered_fraction(batch: SimBatch, horizon: float) -> DeliveryCheck:
    """Share of replications in which an expert signal reached the DM by ``horizon``."""
    got = batch.first_delivery <= horizon + 1e-12
    k, n = int(got.sum()), int(batch.reps.size)
    return DeliveryCheck(k / n, wilson_interval(k, n), batch.first_delivery[got], horizon, n)


def eventual_disclosure_check(config: ScenarioConfig, policies: Mapping[int, LadderPolicy], horizon: float,
                              reps: int | None = None, threads: int = 1) -> DeliveryCheck:
    """Fraction of replications in which the DM receives an expert signal by ``horizon``."""
    cfg = config.replace(sim=_with_horizon(config.sim, horizon))
    return delivered_fraction(run_batch(cfg, policies, reps, threads), horizon)


def _with_horizon(sim, horizon):
    from dataclasses import replace

    return replace(sim, horizon=float(horizon))


def chain_delivery_cdf(rates: Sequence[float], t: float) -> float:
    """``P(sum of independent exponential stages <= t)`` for distinct or repeated rates."""
    rates = [float(r) for r in rates]
    if not rates:
        return 1.0
    if any(r <= 0 for r in rates):
        return 0.0
    n = len(rates)
    Q = np.zeros((n + 1, n + 1))
    for k, r in enumerate(rates):
        Q[k, k] = -r
        Q[k, k + 1] = r
    return float(expm(Q * t)[0, n])
