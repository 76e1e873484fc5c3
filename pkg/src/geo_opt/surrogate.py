"""Softmax (Boltzmann multinomial) surrogate over evaluated candidates."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .born_machine import BitstringDataset
from .errors import InvalidArgument, InvalidData
from .portfolio import as_bits
from .sampling import keys_to_rows, uniform_cardinality_selections

log = logging.getLogger(__name__)

DEFAULT_N_TRAIN = 10_000
DEFAULT_N_SEED = 2_000


class SurrogateWarning(UserWarning):
    pass


@dataclass
class SoftmaxSurrogate:
    support: list
    costs: np.ndarray
    temperature: float
    probabilities: np.ndarray

    @property
    def n_vars(self):
        return len(self.support[0])


def default_temperature(costs):
    """Sample standard deviation of the costs; 1.0 (with a warning) if it is zero."""
    costs = np.asarray(costs, dtype=float)
    if costs.size < 2:
        raise InvalidArgument("need at least two costs for a temperature")
    t = float(np.std(costs, ddof=1))
    if not t > 0:
        warnings.warn("all costs are equal; falling back to temperature 1.0", SurrogateWarning,
                      stacklevel=2)
        return 1.0
    return t


def build_softmax(candidates, costs, temperature):
    """Boltzmann weights ``exp(-cost/T)``, normalized after a min-shift.

    Duplicate candidates collapse to one class that keeps the lowest cost.
    """
    candidates = [c if isinstance(c, str) else "".join(map(str, as_bits(c))) for c in candidates]
    costs = np.asarray(costs, dtype=float)
    if not candidates or len(candidates) != costs.size:
        raise InvalidArgument("candidates and costs must be nonempty parallel lists")
    if np.isnan(costs).any():
        raise InvalidData("NaN cost", row=int(np.flatnonzero(np.isnan(costs))[0]))
    if not temperature > 0:
        raise InvalidArgument("temperature must be positive")
    best = {}
    for c, s in zip(candidates, costs):
        if c not in best or s < best[c]:
            best[c] = s
    support = list(best)
    vals = np.array([best[c] for c in support])
    logits = -(vals - vals.min()) / temperature
    p = np.exp(logits)
    p /= p.sum()
    return SoftmaxSurrogate(support, vals, float(temperature), p)


def sample_training_set(surrogate, n_train=DEFAULT_N_TRAIN, seed=0):
    """``n_train`` draws with replacement from the surrogate multinomial."""
    if n_train < 1:
        raise InvalidArgument("n_train must be >= 1")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(surrogate.support), size=n_train, p=surrogate.probabilities)
    table = keys_to_rows(surrogate.support)
    return BitstringDataset(surrogate.n_vars, table[idx])


def covariance_temperature(covariance):
    """Square root of the mean covariance entry (absolute value if negative)."""
    m = float(np.mean(covariance))
    if m < 0:
        warnings.warn("mean covariance is negative; using its absolute value", SurrogateWarning,
                      stacklevel=2)
        m = -m
    if m == 0:
        warnings.warn("mean covariance is zero; using temperature 1.0", SurrogateWarning, stacklevel=2)
        return 1.0
    return math.sqrt(m)


def reference_cost(temperature, best_cost):
    """Cost assigned to unevaluated pool entries so an evaluated one gets twice their weight."""
    return temperature * math.log(2.0) + best_cost


@dataclass
class ColdStartState:
    seed_pool: list
    evaluated: dict
    sigma_ref: float
    temperature: float
    first: str
    evaluations: list = field(default_factory=list)

    def pool_costs(self):
        return [self.evaluated.get(x, self.sigma_ref) for x in self.seed_pool]

    def surrogate(self):
        return build_softmax(self.seed_pool, self.pool_costs(), self.temperature)


def cold_start(instance, n_seed=DEFAULT_N_SEED, seed=0, oracle=None, temperature=None):
    """Random cardinality-valid pool plus one true evaluation.

    The evaluated point gets cost ``sigma1`` and every other pool member the
    reference cost ``T ln 2 + sigma1``, which gives the evaluated point twice
    the probability of each of the others.
    """
    n, k = instance.n_assets, instance.cardinality
    if n_seed < 1 or n_seed > math.comb(n, k):
        raise InvalidArgument(f"n_seed must be in [1, C({n},{k})]")
    rng = np.random.default_rng(seed)
    pool = uniform_cardinality_selections(rng, n, k, n_seed, distinct=True)
    if temperature is None:
        temperature = covariance_temperature(instance.stats.covariance)
    first = pool[int(rng.integers(n_seed))]
    if oracle is None:
        from .oracle import PortfolioOracle
        oracle = PortfolioOracle(instance)
    ev = oracle(first)
    ev.origin = "cold-start"
    sigma1 = ev.cost if math.isfinite(ev.cost) else 0.0
    return ColdStartState(pool, {first: ev.cost}, reference_cost(temperature, sigma1),
                          float(temperature), first, [ev])
