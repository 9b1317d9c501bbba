import itertools
import json

import numpy as np
import pytest

from ladderlab.model import (
    DM, EXPERT, INTERMEDIARY, AgentSpec, ConfigError, NetworkSpec, NotATreeError, ReputationParams,
    check_bias_aligned, check_bias_monotone_tree, config_to_dict, dumps, enumerate_simple_paths, line_network,
    loads, validate,
)
from ladderlab.presets import load_scenario, scenario_names

REP = ReputationParams()


def agent(i, role=INTERMEDIARY, bias=0.0):
    return AgentSpec(i, role, alpha=1.0, bias=bias, beta=0.1, lambda_bar=1.0, rep=REP)


def dm():
    return AgentSpec(0, DM)


def chain(biases=(0.2, 0.5)):
    e = agent(1, EXPERT, biases[0])
    mids = [agent(k + 2, bias=b) for k, b in enumerate(biases[1:])]
    return line_network(e, mids, dm())


def test_valid_chain_has_no_violations():
    cfg = load_scenario("chain")
    assert validate(cfg) == []


def test_kappa_zero_is_single_violation():
    cfg = load_scenario("chain").with_ou(kappa=0.0)
    assert [v.code for v in validate(cfg)] == ["ou.kappa_nonpositive"]


def test_infeasible_network_is_flagged():
    cfg = load_scenario("chain")
    net = cfg.network.with_links({(1, 2), (2, 3)})
    codes = [v.code for v in validate(cfg.replace(network=net))]
    assert "network.infeasible" in codes


def test_shipped_bad_scenario_lists_every_violation():
    codes = {v.code for v in validate(load_scenario("bad"))}
    assert len(codes) >= 2


def test_validate_is_idempotent():
    cfg = load_scenario("bad")
    assert validate(cfg) == validate(cfg)


def test_every_shipped_scenario_except_bad_is_valid():
    for name in scenario_names():
        if name != "bad":
            assert validate(load_scenario(name)) == [], name


def test_unknown_scenario_name_is_config_error():
    with pytest.raises(ConfigError):
        load_scenario("no_such_scenario")


def test_json_round_trip_and_strict_keys():
    cfg = load_scenario("chain")
    assert loads(dumps(cfg)) == cfg
    doc = config_to_dict(cfg)
    doc["ou"]["typo"] = 1.0
    with pytest.raises(ConfigError):
        loads(json.dumps(doc))


def test_simple_paths_examples():
    net = chain((0.2, 0.5))
    assert enumerate_simple_paths(net, 1, 0) == [[1, 2, 0]]
    assert enumerate_simple_paths(net, 0, 1) == []
    star = NetworkSpec((agent(1, EXPERT), agent(2), agent(3), dm()), {(1, 2), (1, 3), (2, 0), (3, 0)})
    assert enumerate_simple_paths(star, 1, 0) == [[1, 2, 0], [1, 3, 0]]


def _brute_paths(n, links, s, t):
    """Every permutation-ordered node sequence that happens to be a directed path."""
    out = set()
    others = [k for k in range(n) if k not in (s, t)]
    for r in range(len(others) + 1):
        for mid in itertools.permutations(others, r):
            seq = (s, *mid, t)
            if all((a, b) in links for a, b in zip(seq[:-1], seq[1:])):
                out.add(seq)
    return sorted(list(p) for p in out)


def test_simple_paths_match_brute_force_on_random_graphs():
    rng = np.random.default_rng(3)
    for n in (3, 4, 5, 6, 7):
        for _ in range(15):
            links = {(i, j) for i in range(n) for j in range(n) if i != j and rng.random() < 0.4}
            nodes = [dm()] + [agent(k, EXPERT if k == 1 else INTERMEDIARY) for k in range(1, n)]
            net = NetworkSpec(tuple(nodes), links)
            got = enumerate_simple_paths(net, 1, 0)
            assert got == _brute_paths(n, links, 1, 0)
            assert len({tuple(p) for p in got}) == len(got)
            assert all(len(set(p)) == len(p) for p in got)


def test_bias_aligned_examples_and_symmetries():
    assert check_bias_aligned([0.5, 1.0, 2.0])
    assert check_bias_aligned([0.0, -1.0])
    assert not check_bias_aligned([1.0, -1.0])
    rng = np.random.default_rng(0)
    for _ in range(200):
        xs = list(rng.normal(size=rng.integers(1, 6)))
        a = check_bias_aligned(xs)
        assert a == check_bias_aligned(xs[::-1]) == check_bias_aligned([-x for x in xs])


def test_bias_monotone_tree_examples():
    assert check_bias_monotone_tree(chain((1.0, 2.0)))
    assert not check_bias_monotone_tree(chain((1.0, -1.0)))
    direct = NetworkSpec((agent(1, EXPERT, 0.3), dm()), {(1, 0)})
    assert check_bias_monotone_tree(direct)


def test_bias_monotone_tree_rejects_non_tree():
    star = NetworkSpec((agent(1, EXPERT), agent(2), agent(3), dm()), {(1, 2), (1, 3), (2, 0), (3, 0)})
    with pytest.raises(NotATreeError) as err:
        check_bias_monotone_tree(star)
    assert err.value.code == "not_a_tree"
