import dataclasses
import math

import numpy as np
import pytest

from ladderlab.model import DM, EXPERT, INTERMEDIARY, AgentSpec, NetworkSpec, OUParams, ReputationParams, \
    SolverSettings
from ladderlab.path import PathError, build_environment, restart_diagnostic, threshold_gap, certificate_quadrature, fixed_point_residual, \
    material_bound, reputational_bound, rho_max_numeric, solve_network, solve_path, unraveling_certificate
from ladderlab.presets import load_scenario
from ladderlab.qvi import extract_ladder, solve_qvi

SMALL = SolverSettings(m_grid=201, r_grid=21)
CERT_OU = OUParams(kappa=1.0, xbar=0.0, sigma=1.0, rho=0.1)


def cert_agent(**kw):
    base = dict(alpha=1.0, bias=1.0, beta=10.0, lambda_bar=1.0, rep=ReputationParams())
    base.update(kw)
    return AgentSpec(1, EXPERT, **base)


def test_certificate_reference_instance_matches_quadrature():
    a = cert_agent()
    c = unraveling_certificate(a, CERT_OU, p=0.5, delta_rep=1.0)
    vbar = 0.5
    mat = vbar / 2.1 + 2 * math.sqrt(2 * vbar * (vbar + 1.0)) / 1.1
    rep = 10 * 0.5 * 1.0 * 1.0 / (1.1 * 0.1)
    assert c.mat_bound == pytest.approx(mat, rel=1e-15)
    assert c.rep_bound == pytest.approx(rep, rel=1e-15)
    qm, qr = certificate_quadrature(a, CERT_OU, p=0.5, delta_rep=1.0)
    assert abs((qr - qm) - c.gain) <= 1e-8
    assert c.sufficient and c.gain > 0


def test_certificate_without_reputation_is_never_sufficient():
    c = unraveling_certificate(cert_agent(beta=0.0), CERT_OU, 0.5, 1.0)
    assert c.gain == -c.mat_bound < 0
    assert not c.sufficient


def test_certificate_gain_diverges_as_patience_grows():
    gains = [unraveling_certificate(cert_agent(beta=0.1), dataclasses.replace(CERT_OU, rho=r), 0.5, 1.0).gain
             for r in (1e-1, 1e-2, 1e-3, 1e-4)]
    assert np.all(np.diff(gains) > 0)
    assert gains[-1] > 100


def test_beta_min_monotonicity():
    base = unraveling_certificate(cert_agent(), CERT_OU, 0.5, 1.0).beta_min
    assert unraveling_certificate(cert_agent(alpha=2.0), CERT_OU, 0.5, 1.0).beta_min > base
    assert unraveling_certificate(cert_agent(bias=-2.0), CERT_OU, 0.5, 1.0).beta_min > base
    assert unraveling_certificate(cert_agent(lambda_bar=3.0), CERT_OU, 0.5, 1.0).beta_min < base
    # at beta_min the two bounds balance
    a = cert_agent(beta=base)
    assert reputational_bound(a, CERT_OU.rho, 0.5, 1.0) == pytest.approx(material_bound(a, CERT_OU), rel=1e-12)


def test_rho_max_matches_bracketing():
    for beta in (0.5, 2.0, 10.0):
        a = cert_agent(beta=beta)
        c = unraveling_certificate(a, CERT_OU, 0.5, 1.0)
        assert c.rho_max == pytest.approx(rho_max_numeric(a, CERT_OU, 0.5, 1.0), rel=1e-9)


def test_invalid_certificate_inputs():
    with pytest.raises(ValueError):
        unraveling_certificate(cert_agent(), CERT_OU, p=0.0)
    with pytest.raises(ValueError):
        unraveling_certificate(cert_agent(), CERT_OU, p=0.5, delta_rep=0.0)


def test_direct_expert_needs_no_iteration():
    cfg = load_scenario("direct")
    eq = solve_network(cfg.network, cfg.ou, SMALL)
    assert eq.converged and eq.iterations <= 3
    e = cfg.network.agent(1)
    lad = extract_ladder(solve_qvi(e, cfg.ou, build_environment(cfg.network, 1, cfg.ou, {}, {}), SMALL), SMALL)
    assert lad.thresholds == eq.policies[1].thresholds


def test_identical_parallel_intermediaries_get_identical_ladders():
    rep = ReputationParams()
    e = AgentSpec(1, EXPERT, 1.0, 0.2, 0.1, 2.0, rep)
    i = AgentSpec(2, INTERMEDIARY, 1.0, 0.5, 0.1, 1.0, rep)
    j = dataclasses.replace(i, id=3)
    net = NetworkSpec((e, i, j, AgentSpec(0, DM)), {(1, 2), (1, 3), (2, 0), (3, 0)})
    eq = solve_network(net, OUParams(1.0, 0.0, 1.0, 0.1, 0.5), SMALL, tol=1e-3)
    # sequential best responses resolve the profile only to the stopping tolerance
    for a, b in zip(eq.policies[2].thresholds, eq.policies[3].thresholds):
        assert len(a) == len(b)
        assert a == pytest.approx(b, abs=1e-3)


def test_chain_fixed_point_and_order_diagnostic():
    cfg = load_scenario("chain")
    nodes = [cfg.network.agent(k) for k in (1, 2, 3, 0)]
    eq = solve_path(nodes, cfg.ou, SMALL)
    assert eq.converged
    tol = 1e-3
    assert fixed_point_residual(eq, cfg.ou, SMALL) <= tol
    diag = restart_diagnostic(eq, cfg.ou, SMALL, tol=tol)
    assert diag.shift > 0 and len(diag.gaps) == 2
    assert not diag.multiple
    assert threshold_gap(eq.policies, eq.policies) == 0.0
    rev = solve_path(nodes, cfg.ou, SMALL, reverse=True)
    for i in (1, 2, 3):
        for a, b in zip(eq.policies[i].thresholds, rev.policies[i].thresholds):
            assert len(a) == len(b)
            assert np.max(np.abs(np.subtract(a, b)), initial=0.0) <= 2 * tol


def test_unsupported_topology_is_rejected():
    rep = ReputationParams()
    e = AgentSpec(1, EXPERT, 1.0, 0.2, 0.1, 2.0, rep)
    mids = [AgentSpec(k, INTERMEDIARY, 1.0, 0.5, 0.1, 1.0, rep) for k in (2, 3, 4)]
    links = {(1, 2), (1, 3), (2, 4), (3, 4), (4, 0), (2, 0)}
    with pytest.raises(PathError) as err:
        solve_network(NetworkSpec((e, *mids, AgentSpec(0, DM)), links), CERT_OU, SMALL)
    assert err.value.code == "unsupported_topology"
