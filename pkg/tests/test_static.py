import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.stats import norm

from ladderlab.static import GaussianPrior, blocked_interval, blocking_region, brute_force_path, direct_unraveling, \
    interval_moments, static_path_solve, static_tree_rank


def test_direct_unraveling_examples():
    for var in (0.1, 1.0, 9.0):
        out = direct_unraveling(GaussianPrior(0.0, var), alpha_e=2.0, b_e=0.5)
        assert out.v0 == 0.0
        assert out.full_disclosure
        assert out.per_agent_payoffs[0] == -2.0 * 0.25
    assert direct_unraveling(GaussianPrior(), 1.0, 0.0).per_agent_payoffs[0] == 0.0


def test_blocked_interval_examples():
    assert blocked_interval(-1.0, 0.0) == (0.0, 2.0)
    assert blocked_interval(-0.5, 1.0) == (1.0, 2.0)
    rng = np.random.default_rng(0)
    for b, y in zip(-rng.random(50) * 3, rng.normal(size=50)):
        lo, hi = blocked_interval(b, y)
        assert hi - lo == pytest.approx(2 * abs(b), rel=1e-15)
    with pytest.raises(ValueError):
        blocked_interval(0.5, 0.0)


def test_blocking_region_contains_exactly_strict_preference():
    rng = np.random.default_rng(1)
    for b in (-0.7, 0.4):
        y = 0.3
        lo, hi = blocking_region(b, y)
        theta = rng.uniform(-3, 3, 5000)
        prefers = (theta - y) * (theta - y + 2 * b) < 0
        assert np.array_equal(prefers, (theta > lo) & (theta < hi))
    assert blocking_region(0.0, 1.0) is None


def test_interval_moments_against_sampling():
    prior = GaussianPrior(0.5, 2.0)
    x = np.random.default_rng(2).normal(0.5, np.sqrt(2.0), 400_000)
    sel = x[(x > 0.0) & (x < 2.0)]
    mass, mean, var = interval_moments(prior, 0.0, 2.0)
    assert mass == pytest.approx(sel.size / x.size, abs=3e-3)
    assert mean == pytest.approx(sel.mean(), abs=3e-3)
    assert var == pytest.approx(sel.var(), abs=3e-3)


def test_aligned_path_unravels():
    out = static_path_solve([1.0, 1.0], [0.3, 0.7], GaussianPrior())
    assert out.v0 == 0.0
    assert out.full_disclosure


def test_reversing_path_blocks_positive_measure():
    out = static_path_solve([1.0, 1.0], [1.0, -1.0], GaussianPrior())
    assert out.v0 < 0
    assert out.blocked_measure > 0
    assert not out.nonunique


@pytest.mark.parametrize("biases", [[1.0, -1.0], [0.3, -0.8], [-0.2, 0.5, 0.1]])
def test_reversing_path_matches_brute_force(biases):
    prior = GaussianPrior()
    out = static_path_solve([1.0] * len(biases), biases, prior)
    v0, _ = brute_force_path(biases, prior, points=401)
    assert out.v0 == pytest.approx(v0, abs=1e-3)
    # the silent action is the prior mean of its own withheld set, checked by adaptive quadrature
    lo = out.y_silent - 2 * max(max(biases), 0.0)
    hi = out.y_silent - 2 * min(min(biases), 0.0)
    mass = quad(norm.pdf, lo, hi, epsabs=1e-14)[0]
    first = quad(lambda t: t * norm.pdf(t), lo, hi, epsabs=1e-14)[0]
    assert first / mass == pytest.approx(out.y_silent, abs=1e-10)


def test_scale_equivariance():
    biases = [0.4, -0.9]
    base = static_path_solve([1.0, 1.0], biases, GaussianPrior(0.0, 1.0))
    for c in (0.5, 3.0):
        out = static_path_solve([1.0, 1.0], [c * b for b in biases], GaussianPrior(0.0, c * c))
        assert out.v0 == pytest.approx(c * c * base.v0, rel=1e-6)
        for k, (lo, hi) in base.blocked_intervals.items():
            lo2, hi2 = out.blocked_intervals[k]
            assert lo2 == pytest.approx(c * lo, rel=1e-6, abs=1e-9)
            assert hi2 == pytest.approx(c * hi, rel=1e-6, abs=1e-9)


def test_tail_equilibrium_with_small_positive_bias():
    """A tiny positive bias pushes the silent action far into the prior tail."""
    out = static_path_solve([1.0, 1.0], [-0.37, 0.013], GaussianPrior())
    assert out.y_silent > 10
    assert out.v0 <= 0
    mass, mean, _ = interval_moments(GaussianPrior(), out.y_silent - 0.026, out.y_silent + 0.74)
    assert mean == pytest.approx(out.y_silent, abs=1e-9)


def test_interval_moments_deep_tail_is_finite():
    for y in (40.0, 400.0, -4000.0):
        mass, mean, var = interval_moments(GaussianPrior(), y, y + 0.5)
        assert y < mean < y + 0.5
        assert 0 <= var < 0.5**2


def test_v0_is_zero_iff_nothing_blocked():
    rng = np.random.default_rng(4)
    for _ in range(40):
        biases = list(rng.normal(size=rng.integers(1, 4)))
        out = static_path_solve([1.0] * len(biases), biases, GaussianPrior())
        assert out.v0 <= 0
        assert (out.v0 == 0) == (out.blocked_measure == 0)


def test_single_agent_reduces_to_direct_unraveling():
    for b in (-1.0, 0.0, 2.0):
        assert static_path_solve([1.0], [b], GaussianPrior()).v0 == direct_unraveling(GaussianPrior()).v0 == 0.0


def test_tree_rank_examples():
    rank = static_tree_rank([2.0, 1.0, 3.0], GaussianPrior())
    assert rank.sorted_order == (1.0, 2.0, 3.0)
    assert rank.aligned
    assert all(v == 0.0 for v in rank.v0_by_permutation.values())
    assert len(rank.v0_by_permutation) == 6
    mixed = static_tree_rank([0.5, -0.4, 0.9], GaussianPrior())
    assert not mixed.aligned
    assert all(v < 0 for v in mixed.v0_by_permutation.values())


def test_tree_rank_covers_every_permutation():
    biases = [0.1, 0.2, 0.3, 0.4]
    rank = static_tree_rank(biases, GaussianPrior(), expert_bias=0.05)
    assert set(rank.v0_by_permutation) == set(itertools.permutations(biases))


@settings(max_examples=300, deadline=None)
@given(st.floats(-40, 40), st.floats(1e-6, 30), st.floats(0.05, 5))
def test_interval_moments_stay_inside_the_interval(lo, width, sd):
    hi = lo + width
    mass, mean, var = interval_moments(GaussianPrior(0.0, sd * sd), lo, hi)
    assert 0.0 <= mass <= 1.0
    assert lo <= mean <= hi
    # a distribution on an interval has variance at most a quarter of its squared width
    assert 0.0 <= var <= width * width / 4 * (1 + 1e-9)
