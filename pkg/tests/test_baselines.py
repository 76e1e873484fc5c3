import math
from collections import Counter

import numpy as np
import pytest

from geo_opt.baselines import (
    SaConfig,
    conditioned_random,
    metropolis_accept,
    metropolis_chain,
    sa_restarts,
    sa_solve,
    swap_move,
    unconstrained_random,
)
from geo_opt.errors import InvalidArgument
from geo_opt.oracle import PortfolioOracle


def test_swap_move_preserves_cardinality():
    rng = np.random.default_rng(0)
    x = "110100"
    for _ in range(200):
        y = swap_move(x, rng)
        assert y.count("1") == 3
        assert sum(a != b for a, b in zip(x, y)) == 2
        x = y


def test_acceptance_rate():
    rng = np.random.default_rng(1)
    hits = sum(metropolis_accept(0.5, 1.0, rng) for _ in range(40000))
    assert hits / 40000 == pytest.approx(math.exp(-0.5), abs=0.01)
    assert metropolis_accept(-1.0, 1e-9, rng)
    assert not metropolis_accept(math.inf, 1.0, rng)


def test_chain_detailed_balance():
    # fixed temperature on C(4,2): the stationary law is Boltzmann
    costs = {"1100": 0.0, "1010": 0.5, "1001": 1.0, "0110": 0.2, "0101": 0.8, "0011": 0.3}
    rng = np.random.default_rng(2)
    steps = 120000
    visits = Counter(cur for _, _, _, cur in metropolis_chain(costs.get, "1100", [0.5] * steps, rng))
    z = sum(math.exp(-c / 0.5) for c in costs.values())
    for k, c in costs.items():
        assert visits[k] / (steps + 1) == pytest.approx(math.exp(-c / 0.5) / z, abs=0.01)


def test_sa_call_count_and_origin(small_instance):
    o = PortfolioOracle(small_instance)
    res = sa_solve(o, small_instance, SaConfig(n_steps=99, rng_seed=3))
    assert o.calls == 100 == len(res.all_evaluated)
    assert {e.origin for e in res.all_evaluated} == {"sa"}
    assert res.best_cost == min(e.cost for e in res.all_evaluated)
    costs = [h[2] for h in res.history]
    assert all(a >= b for a, b in zip(costs, costs[1:]))


def test_sa_respects_oracle_budget(small_instance):
    o = PortfolioOracle(small_instance, budget=10)
    res = sa_solve(o, small_instance, SaConfig(n_steps=50))
    assert o.calls == 10 and res.warnings


def test_sa_restarts_split_budget(small_instance):
    o = PortfolioOracle(small_instance)
    sa_restarts(o, small_instance, 103, 4, seed=1)
    assert o.calls == 103
    with pytest.raises(InvalidArgument):
        sa_restarts(o, small_instance, 3, 4)


def test_sa_config_validation():
    with pytest.raises(InvalidArgument):
        SaConfig(t_max=1e-5).validate()
    with pytest.raises(InvalidArgument):
        SaConfig(schedule="linear").validate()
    t = SaConfig(n_steps=4).temperatures()
    assert t[0] == 1.0 and t[-1] > 1e-4


def test_conditioned_random(small_instance):
    o = PortfolioOracle(small_instance)
    res = conditioned_random(o, small_instance, 200, seed=5)
    assert o.calls == 200
    assert all(e.bits.count("1") == 4 for e in res.all_evaluated)
    o = PortfolioOracle(small_instance)
    res = conditioned_random(o, small_instance, 500, seed=5, dedup=True)
    assert o.calls == 70 == len({e.bits for e in res.all_evaluated})


def test_unconstrained_random_valid_fraction(small_instance):
    o = PortfolioOracle(small_instance)
    res = unconstrained_random(o, small_instance, 4000, seed=6)
    frac = np.mean([e.bits.count("1") == 4 for e in res.all_evaluated])
    assert frac == pytest.approx(70 / 256, abs=0.03)
    assert all(math.isinf(e.cost) for e in res.all_evaluated if e.bits.count("1") != 4)
