"""Impulse-control solver for one agent's disclosure ladder on an (m, R) grid.

Coordinates
-----------
The agent cares about the gap between the DM's action ``m`` and the true
state ``X``. The solver's belief axis is the public belief measured relative to
the agent's evidence, ``m_c = xbar + (m - X)``, so that ``m_c = xbar`` means
the DM is exactly right. In these coordinates the flow payoff is

    u(m_c, R) = -alpha (m_c - xbar - b)^2 + beta R,

whose average over ``m_c ~ N(xbar, v_eff)`` is the on-path flow
``-alpha (v_eff + b^2) + beta R``. Between disclosures the gap mean-reverts at
``kappa + h^2 v`` with variance rate ``sigma^2 + h^2 v^2`` (stationary filter
variance ``v``). A disclosure resets ``m_c`` to ``N(xbar, v_eff)`` and lifts
reputation to ``R+``.

The value function solves the quasi-variational inequality

    min(rho V - u - L V, V - M V) = 0

by Howard policy iteration on a monotone finite-difference discretization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .belief import gap_coefficients
from .model import AgentSpec, OUParams, SolverSettings
from .reputation import rep_after_disclosure


class SolverError(RuntimeError):
    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code


@dataclass(frozen=True)
class Reset:
    """Another channel into the DM that resets the gap at ``rate`` outside ``(lo, hi)``."""

    rate: float
    lo: float
    hi: float
    v_reset: float = 0.0


@dataclass(frozen=True)
class Environment:
    """What the rest of the network looks like from one agent's seat.

    ``v_eff`` is the variance of the gap right after this agent's disclosure
    reaches the DM (zero when the agent reports to the DM directly).
    ``resets`` are other agents' direct channels into the DM.
    """

    v_eff: float = 0.0
    resets: tuple[Reset, ...] = ()


@dataclass(frozen=True)
class Grid:
    m: np.ndarray
    r: np.ndarray

    @property
    def n_m(self) -> int:
        return self.m.size

    @property
    def n_r(self) -> int:
        return self.r.size

    @property
    def h(self) -> float:
        return float(self.m[1] - self.m[0])

    @property
    def size(self) -> int:
        return self.n_m * self.n_r


def make_grid(agent: AgentSpec, ou: OUParams, settings: SolverSettings, env: Environment | None = None) -> Grid:
    """Uniform grids centred on ``xbar``.

    The belief axis spans ``m_span_sd`` stationary gap standard deviations,
    widened when needed so that the upper end of a biased agent's waiting band
    (which sits at a few multiples of the bias) stays well inside the grid.
    """
    k, s2 = gap_coefficients(ou)
    sd = math.sqrt(s2 / (2.0 * k))
    half = max(settings.m_span_sd * sd, 4.0 * abs(agent.bias) + 4.0 * sd)
    if env is not None and env.v_eff > 0:
        half = max(half, 5.0 * math.sqrt(env.v_eff))
    m = np.linspace(ou.xbar - half, ou.xbar + half, settings.m_grid)
    rep = agent.rep
    r = np.linspace(rep.phi_low, rep.phi_high, settings.r_grid)
    return Grid(m, r)


def _interp_weights(grid_x: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Indices and weights of linear interpolation (clamped at the ends)."""
    x = np.clip(x, grid_x[0], grid_x[-1])
    h = grid_x[1] - grid_x[0]
    pos = (x - grid_x[0]) / h
    i0 = np.minimum(np.floor(pos).astype(int), grid_x.size - 2)
    w1 = pos - i0
    return i0, w1


def _reset_row_weights(grid: Grid, center: float, var: float, nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Column indices (within a row) and weights of E f(center + N(0, var)) by Gauss-Hermite."""
    if var <= 0:
        x = np.array([center])
        w = np.array([1.0])
    else:
        z, wz = np.polynomial.hermite.hermgauss(nodes)
        x = center + math.sqrt(2.0 * var) * z
        w = wz / math.sqrt(math.pi)
    i0, w1 = _interp_weights(grid.m, x)
    cols = np.concatenate([i0, i0 + 1])
    wts = np.concatenate([w * (1 - w1), w * w1])
    # merge duplicate columns so the weight vector is canonical
    out = np.zeros(grid.n_m)
    np.add.at(out, cols, wts)
    nz = np.nonzero(out)[0]
    return nz, out[nz]


def build_generator(ou: OUParams, regime: int, env: Environment, grid: Grid,
                    agent: AgentSpec | None = None, silence_mask: np.ndarray | None = None,
                    quad_nodes: int = 15) -> sp.csr_matrix:
    """Discretized generator of the (m, R) state under a fixed clock regime.

    Belief part: central differences wherever they are monotone, upwind
    otherwise, with zero-flux (reflecting) ends. Reputation part: the silence
    drift of the posterior, active only where the clock is on and
    ``silence_mask`` marks prescribed disclosure, upwinded downward. Jump
    part: each environment reset moves the belief to its reset law within the
    same reputation row. Off-diagonal entries are non-negative and every row
    sums to zero.
    """
    k, s2 = gap_coefficients(ou)
    n_m, n_r = grid.n_m, grid.n_r
    h = grid.h
    k_sd = math.sqrt(s2 / (2 * k)) if s2 > 0 else math.inf
    if h > 0.5 * k_sd:
        raise SolverError("grid_too_coarse", f"spacing {h:.3g} exceeds half the gap standard deviation {k_sd:.3g}")
    m = grid.m
    drift = -k * (m - ou.xbar)
    a = 0.5 * s2
    central = a >= 0.5 * np.abs(drift) * h
    up = np.where(central, a / h**2 + drift / (2 * h), a / h**2 + np.maximum(drift, 0) / h)
    dn = np.where(central, a / h**2 - drift / (2 * h), a / h**2 + np.maximum(-drift, 0) / h)
    up[-1] = 0.0
    dn[0] = 0.0
    rows, cols, vals = [], [], []
    base = np.arange(n_m)
    for j in range(n_r):
        off = j * n_m
        rows += [base[:-1] + off, base[1:] + off]
        cols += [base[1:] + off, base[:-1] + off]
        vals += [up[:-1], dn[1:]]
    for rs in env.resets:
        outside = (m <= rs.lo) | (m >= rs.hi)
        idx, w = _reset_row_weights(grid, ou.xbar, rs.v_reset, quad_nodes)
        src = np.nonzero(outside)[0]
        for j in range(n_r):
            off = j * n_m
            rows.append(np.repeat(src + off, idx.size))
            cols.append(np.tile(idx + off, src.size))
            vals.append(np.tile(rs.rate * w, src.size))
    if regime and silence_mask is not None and agent is not None and agent.lambda_bar > 0:
        rep = agent.rep
        dr = grid.r[1] - grid.r[0]
        pi = (grid.r - rep.phi_low) / (rep.phi_high - rep.phi_low)
        speed = pi * (1 - pi) * agent.lambda_bar * (rep.p_high - rep.p_low) * (rep.phi_high - rep.phi_low)
        mask = np.asarray(silence_mask, dtype=bool).reshape(n_r, n_m)
        for j in range(1, n_r):
            src = np.nonzero(mask[j])[0]
            if speed[j] > 0 and src.size:
                rows.append(src + j * n_m)
                cols.append(src + (j - 1) * n_m)
                vals.append(np.full(src.size, speed[j] / dr))
    n = grid.size
    if rows:
        R = np.concatenate(rows)
        C = np.concatenate(cols)
        Vv = np.concatenate(vals)
    else:
        R = C = np.array([], dtype=int)
        Vv = np.array([])
    L = sp.coo_matrix((Vv, (R, C)), shape=(n, n)).tocsr()
    L.sum_duplicates()
    diag = np.asarray(L.sum(axis=1)).ravel()
    return (L - sp.diags(diag)).tocsr()


def intervention_matrix(grid: Grid, agent: AgentSpec, env: Environment, center: float,
                        quad_nodes: int = 15) -> sp.csr_matrix:
    """Row-per-reputation-level operator ``Q`` with ``(Q V)[j] = M V`` on row ``j``."""
    rep = agent.rep
    r_plus = rep_after_disclosure(rep, grid.r)
    j0, wr = _interp_weights(grid.r, np.asarray(r_plus))
    idx, w = _reset_row_weights(grid, center, env.v_eff, quad_nodes)
    rows, cols, vals = [], [], []
    for j in range(grid.n_r):
        for jj, ww in ((j0[j], 1 - wr[j]), (j0[j] + 1, wr[j])):
            if ww == 0:
                continue
            rows.append(np.full(idx.size, j))
            cols.append(idx + jj * grid.n_m)
            vals.append(ww * w)
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(grid.n_r, grid.size)
    ).tocsr()


def intervention_value(V: np.ndarray, grid: Grid, state: tuple[float, float, float], agent: AgentSpec,
                       quad_nodes: int = 15) -> float:
    """Expected post-disclosure value ``E V(X, R+)`` with ``X ~ N(m, v_eff)``.

    ``V`` has shape ``(n_r, n_m)``. Expectation by Gauss-Hermite quadrature
    with bilinear interpolation; disclosure itself is costless.
    """
    m, v_eff, r = state
    rp = float(rep_after_disclosure(agent.rep, r))
    if v_eff <= 0:
        xs, ws = np.array([m]), np.array([1.0])
    else:
        z, wz = np.polynomial.hermite.hermgauss(quad_nodes)
        xs, ws = m + math.sqrt(2 * v_eff) * z, wz / math.sqrt(math.pi)
    j0, wr = _interp_weights(grid.r, np.array([rp]))
    row = (1 - wr[0]) * V[j0[0]] + wr[0] * V[min(j0[0] + 1, grid.n_r - 1)]
    return float(np.dot(ws, np.interp(xs, grid.m, row)))


@dataclass
class ValueSolution:
    """Discretized solution of one agent's problem; grids have shape ``(n_r, n_m)``."""

    grid: Grid
    values: np.ndarray
    disclose_advantage: np.ndarray
    clock_choice: np.ndarray
    qvi_residual: np.ndarray
    boundaries: list = field(default_factory=list)
    mv: np.ndarray | None = None
    flow: np.ndarray | None = None
    disclose: np.ndarray | None = None
    clock_advantage: np.ndarray | None = None
    iterations: int = 0
    agent: AgentSpec | None = None
    env: Environment | None = None
    ou: OUParams | None = None

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.qvi_residual)))

    @property
    def verification_gap(self) -> float:
        """Largest value of ``M V - V`` over the grid (non-positive when ``V >= M V`` everywhere)."""
        return float(np.max(self.mv[:, None] - self.values))

    @property
    def waiting_verification_gap(self) -> float:
        """Largest ``M V - V`` over nodes where the agent waits at an opportunity."""
        gap = self.mv[:, None] - self.values
        wait = ~self.disclose
        return float(np.max(gap[wait])) if wait.any() else -np.inf


def flow_payoff(agent: AgentSpec, ou: OUParams, grid: Grid) -> np.ndarray:
    mm, rr = np.meshgrid(grid.m, grid.r)
    return -agent.alpha * (mm - ou.xbar - agent.bias) ** 2 + agent.beta * rr


def solve_qvi(agent: AgentSpec, ou: OUParams, env: Environment | None = None,
              settings: SolverSettings | None = None, grid: Grid | None = None) -> ValueSolution:
    """Solve the agent's Bellman problem by Howard policy iteration.

    Disclosure happens only at opportunities, which arrive at ``lambda_bar``
    while the clock is on. With ``D V`` the post-disclosure value, the value
    function satisfies

        rho V = u + max( L V,  L V + lambda_bar max(D V - V, 0) + S V ),

    where the first branch is clock off and the second clock on, and ``S`` is
    the reputational silence drift on nodes where disclosure is prescribed.
    Each sweep solves the linear system of the current policy exactly and
    then updates clock and disclosure choices greedily; the public's
    prescribed-disclosure set is the agent's own current disclosure set, so
    the converged policy is a fixed point of the public inference.
    """
    env = env or Environment()
    settings = settings or SolverSettings()
    grid = grid or make_grid(agent, ou, settings, env)
    n = grid.size
    lam = agent.lambda_bar
    Lm = build_generator(ou, 0, env, grid, quad_nodes=settings.quad_nodes)
    S_full = build_generator(ou, 1, Environment(), grid, agent, np.ones(n, bool)) - build_generator(
        ou, 0, Environment(), grid
    )
    Q = intervention_matrix(grid, agent, env, ou.xbar, settings.quad_nodes)
    row_of = np.repeat(np.arange(grid.n_r), grid.n_m)
    P = Q[row_of]
    u = flow_payoff(agent, ou, grid).ravel()
    eye = sp.identity(n, format="csr")
    jump = (P - eye).tocsr()
    d = np.zeros(n, dtype=bool)
    on = np.ones(n, dtype=bool)
    V = None
    for it in range(1, settings.max_sweeps + 1):
        act = (on & d).astype(float)
        A = ou.rho * eye - Lm - sp.diags(lam * act) @ jump - sp.diags(act) @ S_full
        V_new = spsolve(A.tocsc(), u)
        if not np.all(np.isfinite(V_new)):
            raise SolverError("singular_system", f"non-finite values at sweep {it}")
        gain = P @ V_new - V_new
        d_new = (gain > 0) & (lam > 0)
        h_on_extra = lam * np.maximum(gain, 0.0) + (S_full @ V_new) * d_new
        on_new = h_on_extra >= -1e-14 * (1.0 + np.abs(V_new)) if lam > 0 else np.zeros(n, bool)
        stable = np.array_equal(d_new, d) and np.array_equal(on_new, on)
        change = np.inf if V is None else float(np.max(np.abs(V_new - V)))
        V, d, on = V_new, d_new, on_new
        if stable or change < settings.tol_value * 1e-3:
            break
    else:
        raise SolverError("max_sweeps_exceeded", f"{settings.max_sweeps} sweeps")
    mv_nodes = P @ V
    gain = mv_nodes - V
    h_off = Lm @ V
    h_on = h_off + lam * np.maximum(gain, 0.0) + (S_full @ V) * d
    first = ou.rho * V - u - np.maximum(h_on, h_off)
    # the intervention operator at an opportunity picks the better of disclosing and waiting
    second = V - np.maximum(V, mv_nodes)
    residual = np.maximum(first, second)
    shape = (grid.n_r, grid.n_m)
    sol = ValueSolution(
        grid=grid,
        values=V.reshape(shape),
        disclose_advantage=gain.reshape(shape),
        clock_choice=on.astype(int).reshape(shape),
        qvi_residual=residual.reshape(shape),
        mv=Q @ V,
        flow=u.reshape(shape),
        disclose=d.reshape(shape),
        clock_advantage=(h_on - h_off).reshape(shape),
        iterations=it,
        agent=agent,
        env=env,
        ou=ou,
    )
    sol.boundaries = extract_ladder(sol, settings).thresholds
    return sol


@dataclass
class LadderPolicy:
    """Per reputation row, sorted belief thresholds where disclosure (and the clock) switch.

    ``disclose_below[j]`` says whether beliefs left of the first threshold in
    row ``j`` are in the disclosure region; crossing a threshold flips it.
    Clock thresholds work the same way with ``clock_on_below``.
    """

    agent: int
    r: np.ndarray
    thresholds: list[list[float]]
    disclose_below: list[bool]
    clock_thresholds: list[list[float]]
    clock_on_below: list[bool] = field(default_factory=list)
    value_matching: list[list[float]] = field(default_factory=list)
    pasting_gap: list[list[float]] = field(default_factory=list)
    pasting_flag: list[bool] = field(default_factory=list)
    full_disclosure: list[bool] = field(default_factory=list)

    def __post_init__(self):
        if not self.clock_on_below:
            self.clock_on_below = [True] * len(self.thresholds)

    def row_index(self, r):
        """Nearest reputation row."""
        h = self.r[1] - self.r[0] if self.r.size > 1 else 1.0
        return np.clip(np.rint((np.asarray(r) - self.r[0]) / h).astype(int), 0, self.r.size - 1)

    def discloses(self, m: float, r: float) -> bool:
        j = int(self.row_index(r))
        return bool(_in_region_array(np.asarray(m), self.thresholds[j], self.disclose_below[j]))

    def clock_on(self, m: float, r: float) -> bool:
        j = int(self.row_index(r))
        return bool(_in_region_array(np.asarray(m), self.clock_thresholds[j], self.clock_on_below[j]))

    def discloses_array(self, m, r) -> np.ndarray:
        return self._lookup(m, r, self.thresholds, self.disclose_below)

    def clock_on_array(self, m, r) -> np.ndarray:
        return self._lookup(m, r, self.clock_thresholds, self.clock_on_below)

    def _lookup(self, m, r, ths, belows):
        m = np.asarray(m, dtype=float)
        rows = np.broadcast_to(self.row_index(r), m.shape)
        out = np.empty(m.shape, dtype=bool)
        for j in np.unique(rows):
            sel = rows == j
            out[sel] = _in_region_array(m[sel], ths[j], belows[j])
        return out

    def compile(self) -> "CompiledLadder":
        """Dense threshold tables for vectorized lookups."""
        return CompiledLadder.from_policy(self)

    def action_thresholds(self, j: int) -> tuple[list[float], bool]:
        """Switch points of the effective action (clock on and disclosure prescribed) in row ``j``.

        Returns the sorted cut points and whether the agent acts left of the first one.
        """
        cuts = sorted(set(self.thresholds[j]) | set(self.clock_thresholds[j]))
        if not cuts:
            return [], bool(self.disclose_below[j] and self.clock_on_below[j])
        pts = np.asarray(cuts)
        mids = np.concatenate([[pts[0] - 1.0], 0.5 * (pts[1:] + pts[:-1]), [pts[-1] + 1.0]])
        acts = _in_region_array(mids, self.thresholds[j], self.disclose_below[j]) & _in_region_array(
            mids, self.clock_thresholds[j], self.clock_on_below[j])
        keep = [float(c) for c, a, b in zip(cuts, acts[:-1], acts[1:]) if a != b]
        return keep, bool(acts[0])

    def inaction_width(self) -> np.ndarray:
        """Per row, total length of the effective waiting set (infinite if unbounded).

        The agent waits wherever it would not disclose at an opportunity or
        keeps its clock off, so both layers count.
        """
        out = []
        for j in range(len(self.thresholds)):
            th, below = self.action_thresholds(j)
            pts = [-np.inf, *th, np.inf]
            width = 0.0
            for k in range(len(pts) - 1):
                if (k % 2 == 0) != below:
                    width += pts[k + 1] - pts[k]
            out.append(width)
        return np.asarray(out, dtype=float)

    def effective_band(self, j: int) -> tuple[float, float]:
        """Hull of the effective waiting set in row ``j``; empty as ``(inf, -inf)``."""
        th, below = self.action_thresholds(j)
        if not th:
            return (np.inf, -np.inf) if below else (-np.inf, np.inf)
        lo = th[0] if below else -np.inf
        hi = th[-1] if (len(th) % 2 == 0) == below else np.inf
        return lo, hi

    def band(self, j: int) -> tuple[float, float]:
        """The waiting interval of row ``j`` when it is a single bounded band."""
        th = self.thresholds[j]
        if len(th) == 2 and self.disclose_below[j]:
            return th[0], th[1]
        if not th:
            return (np.inf, -np.inf) if self.disclose_below[j] else (-np.inf, np.inf)
        raise ValueError(f"row {j} is not a single band")

    @staticmethod
    def everywhere(agent: int, r, disclose: bool) -> "LadderPolicy":
        r = np.asarray(r, dtype=float)
        n = r.size
        return LadderPolicy(agent, r, [[] for _ in range(n)], [disclose] * n, [[] for _ in range(n)],
                            full_disclosure=[disclose] * n)

    @staticmethod
    def from_band(agent: int, r, lo, hi) -> "LadderPolicy":
        """Wait inside ``(lo, hi)`` and disclose outside; ``lo`` and ``hi`` may vary by row."""
        r = np.asarray(r, dtype=float)
        n = r.size
        lo = np.broadcast_to(lo, (n,))
        hi = np.broadcast_to(hi, (n,))
        return LadderPolicy(agent, r, [[float(a), float(b)] for a, b in zip(lo, hi)], [True] * n,
                            [[] for _ in range(n)])


@dataclass(frozen=True)
class CompiledLadder:
    """Threshold tables padded with ``+inf``; a region flips at every threshold at or below ``m``."""

    r0: float
    dr: float
    n_r: int
    th: np.ndarray
    below: np.ndarray
    cth: np.ndarray
    cbelow: np.ndarray

    @staticmethod
    def _table(rows: list[list[float]]) -> np.ndarray:
        width = max(1, max(len(t) for t in rows))
        out = np.full((len(rows), width), np.inf)
        for j, t in enumerate(rows):
            out[j, : len(t)] = t
        return out

    @classmethod
    def from_policy(cls, p: LadderPolicy) -> "CompiledLadder":
        dr = float(p.r[1] - p.r[0]) if p.r.size > 1 else 1.0
        return cls(float(p.r[0]), dr, int(p.r.size), cls._table(p.thresholds), np.asarray(p.disclose_below, bool),
                   cls._table(p.clock_thresholds), np.asarray(p.clock_on_below, bool))

    def rows(self, r: np.ndarray) -> np.ndarray:
        return np.clip(np.rint((r - self.r0) / self.dr).astype(np.int64), 0, self.n_r - 1)

    def discloses(self, m: np.ndarray, r: np.ndarray) -> np.ndarray:
        j = self.rows(r)
        flips = np.sum(self.th[j] <= m[:, None], axis=1)
        return self.below[j] ^ (flips % 2 == 1)

    def clock_on(self, m: np.ndarray, r: np.ndarray) -> np.ndarray:
        j = self.rows(r)
        flips = np.sum(self.cth[j] <= m[:, None], axis=1)
        return self.cbelow[j] ^ (flips % 2 == 1)


def _in_region_array(m, th, below: bool):
    k = np.searchsorted(np.asarray(th, dtype=float), m, side="right")
    return np.where(k % 2 == 0, below, not below)


def _crossings(m: np.ndarray, a: np.ndarray, positive: np.ndarray) -> list[tuple[int, float]]:
    out = []
    for i in np.nonzero(positive[1:] != positive[:-1])[0]:
        denom = a[i] - a[i + 1]
        t = m[i] + (m[i + 1] - m[i]) * (a[i] / denom if denom != 0 else 0.5)
        out.append((int(i), float(t)))
    return out


def _one_sided_slope(m, v, nodes, t):
    c = np.polyfit(m[nodes] - t, v[nodes], 2)
    return float(c[2]), float(c[1])


def extract_ladder(sol: ValueSolution, settings: SolverSettings | None = None) -> LadderPolicy:
    """Thresholds as zero crossings of ``M V - V`` by linear interpolation, with diagnostics.

    At each threshold a quadratic through the three nearest nodes on each
    side gives one-sided values and slopes. Value matching is ``|V - M V|`` at
    the threshold and the pasting gap is the relative jump in slope,
    ``|dV- - dV+| / (1 + |dV|)``.
    """
    settings = settings or SolverSettings()
    g = sol.grid
    m = g.m
    ths, belows, cths, cbelows = [], [], [], []
    vms, gaps, flags, fulls = [], [], [], []
    for j in range(g.n_r):
        a = sol.disclose_advantage[j]
        pos = sol.disclose[j]
        cross = _crossings(m, a, pos)
        if len(cross) > settings.threshold_cap:
            raise SolverError("threshold_cap_exceeded", f"row {j}: {len(cross)} crossings")
        vm_row, gap_row = [], []
        v = sol.values[j]
        for i, t in cross:
            left = [q for q in (i, i - 1, i - 2) if q >= 0]
            right = [q for q in (i + 1, i + 2, i + 3) if q < g.n_m]
            if len(left) < 3 or len(right) < 3:
                vm_row.append(float("nan"))
                gap_row.append(float("nan"))
                continue
            vl, dl = _one_sided_slope(m, v, left, t)
            vr, dr = _one_sided_slope(m, v, right, t)
            vm_row.append(abs(0.5 * (vl + vr) - sol.mv[j]))
            gap_row.append(abs(dl - dr) / (1.0 + max(abs(dl), abs(dr))))
        ths.append([t for _, t in cross])
        belows.append(bool(pos[0]))
        ca = sol.clock_advantage[j]
        con = sol.clock_choice[j].astype(bool)
        cths.append([t for _, t in _crossings(m, ca, con)])
        cbelows.append(bool(con[0]))
        vms.append(vm_row)
        gaps.append(gap_row)
        flags.append(any(not (x <= settings.tol_pasting) for x in gap_row))
        fulls.append(bool(pos.all()))
    agent_id = sol.agent.id if sol.agent is not None else -1
    return LadderPolicy(agent_id, g.r.copy(), ths, belows, cths, cbelows, vms, gaps, flags, fulls)
