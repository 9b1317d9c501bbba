import dataclasses
import math

import numpy as np
import pytest

from ladderlab.model import SimSettings
from ladderlab.path import solve_network
from ladderlab.presets import load_scenario
from ladderlab.qvi import LadderPolicy
from ladderlab.simulate import SimulationError, chain_delivery_cdf, delivered_fraction, estimate_values, \
    no_information_value, run_batch, simulate_once, timing_statistics

R_GRID = np.linspace(0.0, 1.0, 21)


def everywhere(cfg, disclose=True):
    return {i: LadderPolicy.everywhere(i, R_GRID, disclose) for i in cfg.network.active}


def short(cfg, reps=400, horizon=None):
    return cfg.replace(sim=dataclasses.replace(cfg.sim, reps=reps, horizon=horizon))


def test_no_opportunities_give_no_information_value():
    cfg = short(load_scenario("direct"), reps=200).with_agent(1, lambda_bar=0.0)
    est = estimate_values(cfg, everywhere(cfg))
    ref = no_information_value(cfg)
    assert abs(est.v0 - ref) <= 3 * est.v0_se + 1e-9


def test_no_information_value_without_news_is_closed_form():
    cfg = load_scenario("direct").with_ou(news_precision=0.0)
    ou = cfg.ou
    T = cfg.sim.resolved_horizon(ou)
    vbar = ou.sigma**2 / (2 * ou.kappa)
    assert no_information_value(cfg) == pytest.approx(-vbar * (1 - math.exp(-ou.rho * T)) / ou.rho, rel=1e-14)


def test_direct_delivery_delay_is_exponential():
    cfg = short(load_scenario("direct"), reps=2000)
    batch = run_batch(cfg, everywhere(cfg))
    lam = cfg.network.agent(1).lambda_bar
    d = batch.first_delivery
    assert np.all(np.isfinite(d))
    assert abs(d.mean() - 1 / lam) <= 3 * d.std(ddof=1) / math.sqrt(d.size)


def test_full_disclosure_chain_follows_stage_composition():
    cfg = short(load_scenario("chain"), reps=2000, horizon=3.0)
    batch = run_batch(cfg, everywhere(cfg))
    rates = [cfg.network.agent(i).lambda_bar for i in (1, 2, 3)]
    for T in (1.0, 2.0, 3.0):
        got = delivered_fraction(batch, T)
        p = chain_delivery_cdf(rates, T)
        assert abs(got.fraction - p) <= 3 * math.sqrt(p * (1 - p) / got.reps)


def test_withholding_everywhere_delivers_nothing():
    cfg = short(load_scenario("chain"), reps=200, horizon=20.0)
    batch = run_batch(cfg, everywhere(cfg, False))
    assert delivered_fraction(batch, 20.0).fraction == 0.0


def test_chain_delivery_cdf_reference_values():
    assert chain_delivery_cdf([2.0], 0.7) == pytest.approx(1 - math.exp(-1.4), rel=1e-13)
    # Erlang(2, 1)
    assert chain_delivery_cdf([1.0, 1.0], 1.5) == pytest.approx(1 - math.exp(-1.5) * 2.5, rel=1e-12)
    assert chain_delivery_cdf([], 1.0) == 1.0


def test_windows_silence_the_agent():
    cfg = short(load_scenario("silence"), reps=10)
    eq = solve_network(cfg.network, cfg.ou, cfg.solver)
    k = {a: n for n, a in enumerate(cfg.network.active)}
    for rep in range(5):
        tr = simulate_once(cfg, eq.policies, rep)
        t = tr.path["t"]
        dt = t[1] - t[0]
        for a, start, dur in cfg.sim.windows:
            for e in tr.events:
                if e.agent == a and e.kind in ("opportunity", "disclosure"):
                    # stamped at the end of the step that realized the event
                    assert not (start <= e.time - dt * 0.5 < start + dur)
            inside = (t >= start) & (t <= start + dur)
            pi = tr.path["pi"][inside, k[a]]
            assert np.ptp(pi) == 0.0


def test_disclosures_are_verifiable():
    cfg = short(load_scenario("chain"), reps=4)
    eq = solve_network(cfg.network, cfg.ou, cfg.solver)
    for rep in range(3):
        tr = simulate_once(cfg, eq.policies, rep)
        t, X = tr.path["t"], tr.path["X"]
        disc = tr.of_kind("disclosure")
        assert disc
        for e in disc:
            i = int(np.argmin(np.abs(t - e.payload["origin"])))
            assert abs(t[i] - e.payload["origin"]) < 1e-9
            assert e.payload["x"] == X[i]


def test_event_times_are_ordered():
    cfg = short(load_scenario("chain"), reps=2)
    tr = simulate_once(cfg, everywhere(cfg), 0)
    times = [e.time for e in tr.events]
    assert all(b >= a for a, b in zip(times[:-1], times[1:]))


def test_results_do_not_depend_on_thread_count():
    cfg = short(load_scenario("chain"), reps=60)
    pol = everywhere(cfg)
    a = run_batch(cfg, pol, threads=1)
    b = run_batch(cfg, pol, threads=3)
    assert np.array_equal(a.reps, b.reps)
    for i in a.payoffs:
        assert np.array_equal(a.payoffs[i], b.payoffs[i])
    assert np.array_equal(a.first_delivery, b.first_delivery)


def _events(evs):
    # payloads carry NaN for undefined jumps, so compare representations
    return [repr(e) for e in evs]


def test_same_seed_same_trace():
    cfg = short(load_scenario("chain"), reps=2)
    pol = everywhere(cfg)
    a, b = simulate_once(cfg, pol, 1), simulate_once(cfg, pol, 1)
    assert _events(a.events) == _events(b.events)
    assert a.payoffs == b.payoffs


def test_crn_traces_agree_until_policies_differ():
    cfg = short(load_scenario("chain"), reps=2)
    pol = everywhere(cfg)
    # reputational weight changes payoffs only, never the event sequence
    other = cfg.with_agent(3, beta=cfg.network.agent(3).beta * 5)
    assert _events(simulate_once(cfg, pol, 0).events) == _events(simulate_once(other, pol, 0).events)
    # a different ladder for agent 3 leaves everything before its first opportunity untouched
    alt = dict(pol)
    alt[3] = LadderPolicy.everywhere(3, R_GRID, False)
    a, b = simulate_once(cfg, pol, 0), simulate_once(cfg, alt, 0)
    first = next(e.time for e in a.events if e.agent == 3 and e.kind == "opportunity")
    assert _events(e for e in a.events if e.time < first) == _events(e for e in b.events if e.time < first)


def test_social_value_sums_node_values_without_costs():
    cfg = short(load_scenario("chain"), reps=100)
    est = estimate_values(cfg, everywhere(cfg))
    assert est.link_cost == 0.0
    assert est.w == pytest.approx(sum(est.means.values()), rel=1e-12)


def test_standard_error_scales_with_replications():
    cfg = load_scenario("chain")
    pol = everywhere(cfg)
    small = estimate_values(short(cfg, reps=400), pol)
    big = estimate_values(short(cfg, reps=1600), pol)
    assert big.v0_se / small.v0_se == pytest.approx(0.5, rel=0.2)


def test_discount_truncation_is_negligible():
    cfg = short(load_scenario("chain"), reps=100)
    est = estimate_values(cfg, everywhere(cfg))
    assert est.batch.tail_bound < 0.01 * abs(est.v0)


def test_poisson_stream_has_zero_burstiness():
    cfg = short(load_scenario("direct"), reps=200, horizon=30.0)
    summary = timing_statistics(run_batch(cfg, everywhere(cfg)))
    assert abs(summary.burstiness) <= 1.96 * summary.burstiness_se
    assert summary.mean == pytest.approx(1.0 / cfg.network.agent(1).lambda_bar, rel=0.05)


def test_timing_needs_enough_events():
    cfg = short(load_scenario("direct"), reps=150, horizon=5.0)
    with pytest.raises(SimulationError) as err:
        timing_statistics(run_batch(cfg, everywhere(cfg, False)))
    assert err.value.code == "insufficient_events"
    with pytest.raises(SimulationError) as err:
        timing_statistics(run_batch(short(cfg, reps=10), everywhere(cfg)))
    assert err.value.code == "insufficient_traces"


def test_missing_policy_is_rejected():
    cfg = short(load_scenario("chain"), reps=2)
    pol = everywhere(cfg)
    del pol[2]
    with pytest.raises(SimulationError) as err:
        run_batch(cfg, pol)
    assert err.value.code == "policy_missing"


def test_sim_settings_defaults():
    ou = load_scenario("chain").ou
    s = SimSettings()
    assert s.resolved_dt(ou) == pytest.approx(0.01 / ou.kappa)
    assert math.exp(-ou.rho * s.resolved_horizon(ou)) <= 1e-4 + 1e-15
