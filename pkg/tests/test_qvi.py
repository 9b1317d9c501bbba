import math

import numpy as np
import pytest

from ladderlab.model import INTERMEDIARY, AgentSpec, OUParams, ReputationParams, SolverSettings
from ladderlab.qvi import Environment, Grid, Reset, ValueSolution, build_generator, extract_ladder, \
    intervention_matrix, intervention_value, make_grid, solve_qvi
from ladderlab.reputation import rep_after_disclosure

OU = OUParams(kappa=1.0, xbar=0.0, sigma=1.0, rho=0.1)
SMALL = SolverSettings(m_grid=201, r_grid=11)


def agent(bias=0.3, beta=0.1, lam=1.0):
    return AgentSpec(2, INTERMEDIARY, alpha=1.0, bias=bias, beta=beta, lambda_bar=lam, rep=ReputationParams())


def test_zero_dynamics_give_zero_operator():
    ou = OUParams(kappa=0.0, xbar=0.0, sigma=0.0, rho=0.1)
    grid = Grid(np.linspace(-1, 1, 21), np.linspace(0, 1, 3))
    L = build_generator(ou, 0, Environment(), grid)
    assert L.count_nonzero() == 0


def test_generator_annihilates_constants_and_is_monotone():
    a = agent()
    env = Environment(0.2, (Reset(0.7, -0.5, 0.5, 0.1),))
    grid = make_grid(a, OU, SMALL, env)
    mask = np.ones(grid.size, bool)
    for regime in (0, 1):
        L = build_generator(OU, regime, env, grid, a, mask)
        assert np.max(np.abs(L @ np.ones(grid.size))) < 1e-10
        off = L - __import__("scipy.sparse", fromlist=["diags"]).diags(L.diagonal())
        assert off.min() >= 0


def test_drift_vanishes_at_mean():
    grid = make_grid(agent(), OU, SMALL)
    L = build_generator(OU, 0, Environment(), grid)
    mid = grid.n_m // 2
    assert grid.m[mid] == pytest.approx(OU.xbar, abs=1e-12)
    row = L.getrow(mid).toarray().ravel()
    # symmetric neighbours means zero first-order term
    assert row[mid + 1] == pytest.approx(row[mid - 1], rel=1e-14)


def test_intervention_degenerate_and_constant_cases():
    a = agent()
    grid = make_grid(a, OU, SMALL)
    rng = np.random.default_rng(0)
    V = rng.normal(size=(grid.n_r, grid.n_m))
    r = grid.r[3]
    rp = float(rep_after_disclosure(a.rep, r))
    m = grid.m[50]
    # with v_eff = 0 the value is read off at (m, R+) by interpolation in R only
    j = np.searchsorted(grid.r, rp) - 1
    w = (rp - grid.r[j]) / (grid.r[1] - grid.r[0])
    expect = (1 - w) * V[j, 50] + w * V[j + 1, 50]
    assert intervention_value(V, grid, (m, 0.0, r), a) == pytest.approx(expect, rel=1e-13)
    const = np.full((grid.n_r, grid.n_m), -2.5)
    assert intervention_value(const, grid, (0.3, 0.4, 0.5), a) == pytest.approx(-2.5, rel=1e-14)


def test_intervention_quadrature_matches_monte_carlo():
    a = agent()
    grid = make_grid(a, OU, SMALL)
    V = np.cos(grid.m)[None, :] + grid.r[:, None] ** 2
    m, v_eff, r = 0.4, 0.05, 0.35
    quad = intervention_value(V, grid, (m, v_eff, r), a)
    rng = np.random.default_rng(1)
    z = rng.standard_normal(500_000)
    x = np.concatenate([m + math.sqrt(v_eff) * z, m - math.sqrt(v_eff) * z])
    rp = float(rep_after_disclosure(a.rep, r))
    row = np.array([np.interp(rp, grid.r, V[:, i]) for i in range(grid.n_m)])
    mc = np.interp(x, grid.m, row).mean()
    assert abs(quad - mc) <= 1e-4


def test_intervention_matrix_matches_pointwise_value():
    a = agent()
    env = Environment(0.3)
    grid = make_grid(a, OU, SMALL, env)
    V = np.sin(grid.m)[None, :] * (1 + grid.r[:, None])
    Q = intervention_matrix(grid, a, env, OU.xbar, SMALL.quad_nodes)
    mv = Q @ V.ravel()
    for j in (0, 4, 10):
        assert mv[j] == pytest.approx(intervention_value(V, grid, (OU.xbar, 0.3, grid.r[j]), a), abs=1e-12)


def _no_disclosure_value(a, ou, m):
    k, s2 = ou.kappa, ou.sigma**2
    d = m - ou.xbar
    loss = d * d / (ou.rho + 2 * k) - 2 * a.bias * d / (ou.rho + k) + a.bias**2 / ou.rho \
        + s2 / (2 * k) * (1 / ou.rho - 1 / (ou.rho + 2 * k))
    return -a.alpha * loss


def test_zero_clock_rate_matches_closed_form():
    a = agent(bias=0.4, beta=0.2, lam=0.0)
    sol = solve_qvi(a, OU, settings=SolverSettings(m_grid=401, r_grid=11))
    assert not sol.disclose.any()
    inner = np.abs(sol.grid.m) < 2.0
    for j in (0, 5, 10):
        expect = _no_disclosure_value(a, OU, sol.grid.m[inner]) + a.beta * sol.grid.r[j] / OU.rho
        assert np.max(np.abs(sol.values[j, inner] - expect)) < 1e-3 * np.max(np.abs(expect))


def test_unbiased_agent_without_reputation_discloses_everywhere_off_the_mean():
    a = agent(bias=0.0, beta=0.0)
    sol = solve_qvi(a, OU, settings=SMALL)
    off_mean = np.abs(sol.grid.m - OU.xbar) > 1e-12
    assert np.all(sol.disclose[:, off_mean])
    assert sol.max_residual <= 1e-7


def test_symmetric_instance_has_symmetric_advantage():
    a = agent(bias=0.0, beta=0.3)
    sol = solve_qvi(a, OU, Environment(0.1), settings=SMALL)
    adv = sol.disclose_advantage
    assert np.max(np.abs(adv - adv[:, ::-1])) <= 1e-6


def test_biased_agent_solution_meets_qvi_and_verification():
    a = agent(bias=0.5, beta=0.05)
    sol = solve_qvi(a, OU, settings=SMALL)
    assert sol.max_residual <= 1e-7
    assert sol.waiting_verification_gap <= 1e-7
    lad = extract_ladder(sol, SMALL)
    assert all(len(t) <= SMALL.threshold_cap for t in lad.thresholds)
    assert np.all(np.isfinite(lad.inaction_width()))


def _synthetic(adv, r=None):
    n_r, n_m = adv.shape
    grid = Grid(np.linspace(-1.0, 1.0, n_m), np.linspace(0.0, 1.0, n_r) if r is None else r)
    zeros = np.zeros_like(adv)
    return ValueSolution(grid, zeros, adv, np.ones_like(adv, dtype=int), zeros, mv=np.zeros(n_r),
                         disclose=adv > 0, clock_advantage=np.ones_like(adv))


def test_extract_ladder_pure_cases():
    neg = extract_ladder(_synthetic(-np.ones((5, 41))))
    assert all(t == [] for t in neg.thresholds)
    assert not any(neg.full_disclosure)
    pos = extract_ladder(_synthetic(np.ones((5, 41))))
    assert all(t == [] for t in pos.thresholds)
    assert all(pos.full_disclosure)


def test_extract_ladder_single_crossing_matches_bisection():
    r = np.linspace(0.0, 1.0, 6)
    m = np.linspace(-1.0, 1.0, 41)
    cuts = -0.5 + 0.8 * r
    adv = m[None, :] - cuts[:, None]
    lad = extract_ladder(_synthetic(adv, r))
    got = [t[0] for t in lad.thresholds]
    assert all(len(t) == 1 for t in lad.thresholds)
    assert np.all(np.diff(got) > 0)
    for j, t in enumerate(got):
        lo, hi = -1.0, 1.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            lo, hi = (lo, mid) if mid - cuts[j] > 0 else (mid, hi)
        assert t == pytest.approx(0.5 * (lo + hi), abs=1e-12)
