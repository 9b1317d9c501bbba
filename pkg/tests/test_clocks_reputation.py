import math

import numpy as np
import pytest

from ladderlab.clocks import OFF, ON, ClockPolicy, OpportunityEvent, apply_windows, merge_event_streams, \
    sample_arrivals, sample_next_arrival
from ladderlab.model import ReputationParams
from ladderlab.reputation import disclosure_jump, pi_from_rep, rep_after_disclosure, rep_from_pi, silence_drift, \
    silence_drift_array


# --- clocks ----------------------------------------------------------------


def test_all_off_regime_never_arrives():
    rng = np.random.default_rng(0)
    assert all(sample_next_arrival(2.0, [(0.0, 10.0, OFF)], rng) is None for _ in range(1000))


def test_interarrival_mean_is_exponential():
    rng = np.random.default_rng(1)
    n = 100_000
    x = np.array([sample_next_arrival(2.0, [(0.0, math.inf, ON)], rng) for _ in range(n)])
    assert abs(x.mean() - 0.5) <= 4 * 0.5 / math.sqrt(n)


def test_window_pushes_arrivals_past_its_end():
    rng = np.random.default_rng(2)
    path = apply_windows([(0.0, math.inf, ON)], [(0.0, 1.0)])
    assert path[0] == (0.0, 1.0, OFF)
    assert all(sample_next_arrival(3.0, path, rng) >= 1.0 for _ in range(2000))


def test_clock_policy_window_overrides_regime():
    pol = ClockPolicy(4, announced_windows=((2.0, 1.0),))
    assert pol.regime(None, 2.5) == OFF
    assert pol.regime(None, 3.0) == ON


def test_cox_count_matches_poisson_law():
    rng = np.random.default_rng(3)
    lam, T = 1.5, 4.0
    path = [(0.0, 1.0, ON), (1.0, 2.5, OFF), (2.5, T, ON)]
    f = 2.5 / T
    counts = np.array([len(sample_arrivals(lam, path, rng)) for _ in range(100_000)])
    mu = lam * f * T
    n = counts.size
    assert abs(counts.mean() - mu) <= 4 * math.sqrt(mu / n)
    # variance of the sample variance for a Poisson law: (mu + 2 mu^2) / n
    assert abs(counts.var(ddof=1) - mu) <= 4 * math.sqrt((mu + 2 * mu * mu) / n)


def test_arrivals_are_increasing_and_avoid_off_segments():
    rng = np.random.default_rng(4)
    path = apply_windows([(0.0, 20.0, ON)], [(3.0, 2.0), (10.0, 4.0)])
    for _ in range(500):
        ts = sample_arrivals(2.0, path, rng)
        assert all(b > a for a, b in zip(ts[:-1], ts[1:]))
        assert not any(3.0 <= t < 5.0 or 10.0 <= t < 14.0 for t in ts)


def test_same_seed_same_arrivals():
    path = [(0.0, 50.0, ON)]
    a = sample_arrivals(1.0, path, np.random.default_rng(9))
    b = sample_arrivals(1.0, path, np.random.default_rng(9))
    assert a == b


def test_merge_examples():
    assert [e.time for e in merge_event_streams([[1, 3], [2]])] == [1, 2, 3]
    ev = merge_event_streams({2: [2.0], 1: [2.0]})
    assert ev == [OpportunityEvent(2.0, 1), OpportunityEvent(2.0, 2)]
    assert merge_event_streams({}) == []
    assert merge_event_streams({1: [1.0]}, checkpoints=[1.0])[0].agent == -1


# --- reputation ------------------------------------------------------------


def test_affine_capital_examples():
    rep = ReputationParams(phi_low=0.0, phi_high=2.0)
    assert rep_from_pi(ReputationParams(), 0.0) == 0.0
    assert rep_from_pi(ReputationParams(), 1.0) == 1.0
    assert rep_from_pi(rep, 0.25) == 0.5
    assert pi_from_rep(rep, 0.5) == 0.25


def test_silence_drift_examples():
    rep = ReputationParams(p_high=1.0, p_low=0.0)
    assert silence_drift(rep, 0.4, 1.0, False, 5.0) == 0.4
    assert silence_drift(rep, 0.0, 1.0, True, 5.0) == 0.0
    assert silence_drift(rep, 1.0, 1.0, True, 5.0) == 1.0
    dt = 1e-3
    got = silence_drift(rep, 0.5, 1.0, True, dt)
    assert got == pytest.approx(0.5 - 0.25 * dt, abs=dt * dt)


def test_silence_drift_matches_discrete_bayes_oracle():
    rep = ReputationParams(p_high=0.9, p_low=0.3)
    pi, lam, dt = 0.6, 1.7, 0.5
    k = 1000
    h = dt / k
    q = pi
    for _ in range(k):
        # no disclosure in a sub-step: likelihood 1 - lam h p for each type
        hi = q * (1 - lam * h * rep.p_high)
        lo = (1 - q) * (1 - lam * h * rep.p_low)
        q = hi / (hi + lo)
    assert silence_drift(rep, pi, lam, True, dt) == pytest.approx(q, rel=1e-3)


def test_silence_drift_array_agrees_with_scalar():
    rep = ReputationParams()
    pi = np.linspace(0.0, 1.0, 11)
    mask = np.arange(11) % 2 == 0
    out = silence_drift_array(rep, pi, 1.3, mask, 0.2)
    for p, mk, o in zip(pi, mask, out):
        assert o == pytest.approx(silence_drift(rep, p, 1.3, bool(mk), 0.2), rel=1e-13)


def test_disclosure_jump_examples():
    assert disclosure_jump(ReputationParams(p_high=0.9, p_low=0.3), 0.5) == pytest.approx(0.75)
    assert disclosure_jump(ReputationParams(p_high=0.9, p_low=0.0), 0.2) == 1.0
    assert disclosure_jump(ReputationParams(), 1.0) == 1.0


def test_disclosure_jump_is_monotone():
    rep = ReputationParams()
    pi = np.linspace(0.0, 1.0, 101)
    up = disclosure_jump(rep, pi)
    assert np.all(up[1:-1] > pi[1:-1])
    assert up[0] == 0.0 and up[-1] == 1.0
    assert np.all(np.diff(rep_after_disclosure(rep, pi)) > 0)


def test_posterior_is_a_martingale():
    """Drift during silence and jumps at disclosures keep E[pi_t] at pi_0."""
    rep = ReputationParams(pi0=0.5, p_high=0.9, p_low=0.3)
    rng = np.random.default_rng(8)
    n, lam, T, dt = 100_000, 1.0, 2.0, 0.01
    high = rng.random(n) < rep.pi0
    p = np.where(high, rep.p_high, rep.p_low)
    pi = np.full(n, rep.pi0)
    for _ in range(int(T / dt)):
        opp = rng.random(n) < lam * dt
        disc = opp & (rng.random(n) < p)
        pi = np.where(disc, disclosure_jump(rep, pi), silence_drift_array(rep, pi, lam, ~disc, dt))
    # discrete steps with the continuous drift carry an O(dt) bias well inside 3 SE
    assert abs(pi.mean() - rep.pi0) <= 3 * pi.std(ddof=1) / math.sqrt(n)
