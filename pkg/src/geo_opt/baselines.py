"""Classical reference solvers sharing the GEO result format."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .engine import GeoRunResult, _best
from .errors import BudgetExhausted, InvalidArgument
from .portfolio import as_bits, bits_key
from .sampling import random_selection


@dataclass
class SaConfig:
    t_max: float = 1.0
    t_min: float = 1e-4
    n_steps: int = 20_000
    schedule: str = "geometric"
    rng_seed: int = 0

    def validate(self):
        if not 0 < self.t_min < self.t_max:
            raise InvalidArgument("need 0 < t_min < t_max")
        if self.n_steps < 0:
            raise InvalidArgument("n_steps must be nonnegative")
        if self.schedule != "geometric":
            raise InvalidArgument(f"unsupported schedule {self.schedule!r}")
        return self

    def temperatures(self):
        k = np.arange(self.n_steps)
        return self.t_max * (self.t_min / self.t_max) ** (k / max(self.n_steps, 1))


def swap_move(bits, rng):
    """Turn one selected position off and one unselected position on."""
    ones = [i for i, b in enumerate(bits) if b == "1"]
    zeros = [i for i, b in enumerate(bits) if b == "0"]
    if not ones or not zeros:
        return bits
    i = ones[int(rng.integers(len(ones)))]
    j = zeros[int(rng.integers(len(zeros)))]
    out = list(bits)
    out[i], out[j] = "0", "1"
    return "".join(out)


def metropolis_accept(delta, temperature, rng):
    """Accept downhill always and uphill with probability ``exp(-delta/T)``."""
    if delta <= 0 or math.isnan(delta):
        return True
    if math.isinf(delta):
        return False
    return rng.random() < math.exp(-delta / temperature)


def metropolis_chain(cost_fn, start, temperatures, rng):
    """Swap-move Metropolis walk; yields ``(proposal, cost, accepted, current)`` per step.

    ``cost_fn`` is called once per step on the proposal.  Moves out of an
    infeasible (infinite-cost) state are always accepted.
    """
    cur = start
    cur_cost = cost_fn(start)
    yield start, cur_cost, True, cur
    for t in temperatures:
        prop = swap_move(cur, rng)
        c = cost_fn(prop)
        delta = c - cur_cost if math.isfinite(cur_cost) else -math.inf
        ok = metropolis_accept(delta, t, rng)
        if ok:
            cur, cur_cost = prop, c
        yield prop, c, ok, cur


def _trace(evals, offset=0, best=math.inf):
    history = []
    for i, ev in enumerate(evals, start=1):
        if ev.cost < best:
            best = ev.cost
        history.append((0, offset + i, best))
    return history


def sa_solve(oracle, instance, cfg=None, start=None):
    """Cardinality-preserving simulated annealing.

    Makes ``cfg.n_steps + 1`` oracle calls (the start plus one per step)
    unless the oracle's budget stops it first.  Every evaluated proposal is
    kept in ``all_evaluated`` so the run can seed a booster.
    """
    cfg = (cfg or SaConfig()).validate()
    rng = np.random.default_rng(cfg.rng_seed)
    n, kappa = instance.n_assets, instance.cardinality
    if start is None:
        start = random_selection(rng, n, kappa)
    start = bits_key(as_bits(start, n))
    if start.count("1") != kappa:
        raise InvalidArgument(f"start selection must contain exactly {kappa} assets")
    evals, accepted = [], 0

    def cost(key):
        ev = oracle(key)
        ev.origin = "sa"
        evals.append(ev)
        return ev.cost

    notes = []
    try:
        for _, _, ok, _ in metropolis_chain(cost, start, cfg.temperatures(), rng):
            accepted += ok
    except BudgetExhausted:
        notes.append(f"oracle budget exhausted after {len(evals)} calls")
    return GeoRunResult(_best(evals), _trace(evals), evals, 0, notes,
                        {"solver": "sa", "accepted": accepted - 1, "steps": max(len(evals) - 1, 0)})


def sa_restarts(oracle, instance, budget, n_restarts=1, cfg=None, seed=0):
    """Independent SA chains sharing ``budget`` calls as evenly as possible."""
    if budget < n_restarts or n_restarts < 1:
        raise InvalidArgument("need 1 <= n_restarts <= budget")
    base = cfg or SaConfig()
    seeds = np.random.SeedSequence(seed).spawn(n_restarts)
    runs = []
    for r in range(n_restarts):
        calls = budget // n_restarts + (1 if r < budget % n_restarts else 0)
        c = SaConfig(base.t_max, base.t_min, calls - 1, base.schedule, int(seeds[r].generate_state(1)[0]))
        runs.append(sa_solve(oracle, instance, c))
    evals = [e for run in runs for e in run.all_evaluated]
    return GeoRunResult(_best(evals), _trace(evals), evals, 0,
                        [w for run in runs for w in run.warnings],
                        {"solver": "sa", "restarts": n_restarts})


def conditioned_random(oracle, instance, budget, seed=0, dedup=False):
    """Uniform draws over cardinality-valid selections."""
    if budget < 1:
        raise InvalidArgument("budget must be >= 1")
    rng = np.random.default_rng(seed)
    n, kappa = instance.n_assets, instance.cardinality
    seen, evals = set(), []
    space = math.comb(n, kappa)
    while len(evals) < budget and not (dedup and len(seen) >= space):
        key = random_selection(rng, n, kappa)
        if dedup:
            if key in seen:
                continue
            seen.add(key)
        ev = oracle(key)
        ev.origin = "conditioned-random"
        evals.append(ev)
    return GeoRunResult(_best(evals), _trace(evals), evals, 0, [], {"solver": "conditioned_random"})


def unconstrained_random(oracle, instance, budget, seed=0):
    """Uniform draws over all ``2**N`` bitstrings; wrong cardinalities cost a call."""
    if budget < 1:
        raise InvalidArgument("budget must be >= 1")
    rng = np.random.default_rng(seed)
    n = instance.n_assets
    evals = []
    for _ in range(budget):
        key = bits_key(rng.integers(0, 2, size=n))
        ev = oracle(key)
        ev.origin = "random"
        evals.append(ev)
    return GeoRunResult(_best(evals), _trace(evals), evals, 0, [], {"solver": "random"})
