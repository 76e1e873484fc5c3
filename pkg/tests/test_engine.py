import math

import numpy as np
import pytest

from geo_opt.baselines import SaConfig, sa_solve
from geo_opt.born_machine import TrainConfig
from geo_opt.engine import (
    STANDALONE,
    GeoConfig,
    GeoRunResult,
    _pick_standalone,
    count_outstanding,
    run_booster,
    run_standalone,
)
from geo_opt.errors import InvalidArgument
from geo_opt.oracle import PortfolioOracle

LIGHT = TrainConfig(max_bond_dim=4, n_sweeps=2, grad_steps_per_bond=2)


@pytest.fixture(scope="module")
def seeded(mid_instance):
    o = PortfolioOracle(mid_instance)
    return sa_solve(o, mid_instance, SaConfig(n_steps=199, rng_seed=1)).all_evaluated


def booster_cfg(**kw):
    base = dict(n_train=2000, n_mps=1000, train_cfg=LIGHT, max_iterations=2, eval_budget=60)
    base.update(kw)
    return GeoConfig(**base)


def test_booster_invariants(mid_instance, seeded):
    o = PortfolioOracle(mid_instance)
    res = run_booster(o, seeded, booster_cfg())
    seed_bits = {e.bits for e in seeded}
    gen = [e for e in res.all_evaluated if e.origin == "generator"]
    assert gen and all(e.bits not in seed_bits for e in gen)
    assert len({e.bits for e in res.all_evaluated}) == len(res.all_evaluated)
    assert all(e.bits.count("1") == 6 for e in gen)
    assert o.calls == len(gen) <= 60
    assert res.best_cost <= min(e.cost for e in seeded)
    assert res.outstanding_count == count_outstanding(res, res.info["seed_best"])


def test_booster_is_deterministic(mid_instance, seeded):
    a = run_booster(PortfolioOracle(mid_instance), seeded, booster_cfg(rng_seed=9))
    b = run_booster(PortfolioOracle(mid_instance), seeded, booster_cfg(rng_seed=9))
    assert a.to_dict() == b.to_dict()


def test_booster_seed_set_size(mid_instance, seeded):
    res = run_booster(PortfolioOracle(mid_instance), seeded, booster_cfg(seed_percentile=0.05, eval_budget=5))
    assert res.info["n_seed"] == round(0.05 * len(seeded))


def test_booster_rejects_empty_or_infinite(mid_instance, seeded):
    with pytest.raises(InvalidArgument):
        run_booster(PortfolioOracle(mid_instance), [], booster_cfg())
    bad = [type(seeded[0])(seeded[0].bits, seeded[0].weights, math.inf, False)]
    with pytest.raises(InvalidArgument):
        run_booster(PortfolioOracle(mid_instance), bad, booster_cfg())


def standalone_cfg(**kw):
    base = dict(mode=STANDALONE, n_seed=200, n_train=2000, n_mps=500, train_cfg=LIGHT, eval_budget=20)
    base.update(kw)
    return GeoConfig(**base)


def test_standalone_spends_exact_budget(mid_instance):
    o = PortfolioOracle(mid_instance)
    res = run_standalone(o, mid_instance, standalone_cfg())
    assert o.calls == 20 == len(res.all_evaluated)
    assert len({e.bits for e in res.all_evaluated}) == 20
    assert res.all_evaluated[0].origin == "cold-start"
    used = [h[1] for h in res.history]
    assert used[0] == 1 and used[-1] == 20


def test_standalone_exhausts_small_space(small_instance):
    o = PortfolioOracle(small_instance)
    res = run_standalone(o, small_instance, standalone_cfg(n_seed=70, eval_budget=200))
    assert o.calls == 70
    brute = min(PortfolioOracle(small_instance)(e.bits).cost for e in res.all_evaluated)
    assert res.best_cost == brute


@pytest.mark.parametrize("rule", [dict(temperature_rule="cost-std"), dict(reference_rule="fixed"),
                                  dict(tie_break="probability")])
def test_standalone_rule_variants(mid_instance, rule):
    o = PortfolioOracle(mid_instance)
    run_standalone(o, mid_instance, standalone_cfg(eval_budget=8, **rule))
    assert o.calls == 8


def test_standalone_needs_budget(mid_instance):
    with pytest.raises(InvalidArgument):
        run_standalone(PortfolioOracle(mid_instance), mid_instance, standalone_cfg(eval_budget=None))


def test_pick_standalone_alternates():
    rng = np.random.default_rng(0)
    keys = ["a", "b", "c", "d"]
    counts = [5, 1, 3, 2]
    assert _pick_standalone(keys, counts, 2, rng) == ["a", "b"]
    assert _pick_standalone(keys, counts, 4, rng) == ["a", "b", "c", "d"]
    assert _pick_standalone(["x", "y"], [1, 1], 1, rng, scores=[0.1, 0.9]) == ["y"]


def test_config_validation_and_roundtrip():
    for bad in (dict(mode="x"), dict(seed_percentile=0), dict(temperature_rule="x"),
                dict(tie_break="x"), dict(reference_rule="x"), dict(max_stall=0)):
        with pytest.raises(InvalidArgument):
            GeoConfig(**bad).validate()
    cfg = GeoConfig(train_cfg=LIGHT, rng_seed=4)
    assert GeoConfig.from_dict(cfg.to_dict()) == cfg


def test_result_roundtrip(mid_instance):
    res = run_standalone(PortfolioOracle(mid_instance), mid_instance, standalone_cfg(eval_budget=4))
    back = GeoRunResult.from_dict(res.to_dict())
    assert back.to_dict() == res.to_dict()
