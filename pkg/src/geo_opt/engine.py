"""The generator-enhanced optimization loop.

Both modes share one cycle: build a softmax surrogate over the candidates
seen so far, draw a training set from it, fit an MPS Born machine, sample
the machine, keep cardinality-valid unseen samples, evaluate them and merge
the results back in.  Booster mode starts from another solver's
evaluations; stand-alone mode starts from a random cardinality-valid pool
with a single true evaluation.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .born_machine import TrainConfig, init_mps, log_amplitudes, sample, train
from .errors import BudgetExhausted, InvalidArgument
from .portfolio import EvaluatedCandidate
from .sampling import keys_to_rows, random_selection, rows_to_keys, unique_rows
from .surrogate import (
    DEFAULT_N_SEED,
    DEFAULT_N_TRAIN,
    build_softmax,
    cold_start,
    default_temperature,
    reference_cost,
    sample_training_set,
)

log = logging.getLogger(__name__)

BOOSTER = "booster"
STANDALONE = "standalone"


@dataclass
class GeoConfig:
    mode: str = BOOSTER
    n_seed: int = DEFAULT_N_SEED
    seed_percentile: float = 0.10
    n_train: int = DEFAULT_N_TRAIN
    n_mps: int = 4000
    n_select_standalone: int = 2
    train_cfg: TrainConfig = field(default_factory=TrainConfig)
    init_bond: int = 2
    max_iterations: int | None = 1
    max_stall: int = 3
    eval_budget: int | None = None
    temperature_rule: str = "covariance"
    reference_rule: str = "rolling"
    tie_break: str = "random"
    rng_seed: int = 0

    def validate(self):
        if self.mode not in (BOOSTER, STANDALONE):
            raise InvalidArgument(f"unknown GEO mode {self.mode!r}")
        if not 0 < self.seed_percentile <= 1:
            raise InvalidArgument("seed_percentile must lie in (0, 1]")
        if self.n_select_standalone < 1:
            raise InvalidArgument("n_select_standalone must be >= 1")
        if self.max_stall < 1:
            raise InvalidArgument("max_stall must be >= 1")
        if self.n_train < 1 or self.n_mps < 1 or self.n_seed < 1:
            raise InvalidArgument("n_train, n_mps and n_seed must be >= 1")
        if self.temperature_rule not in ("covariance", "cost-std"):
            raise InvalidArgument(f"unknown temperature rule {self.temperature_rule!r}")
        if self.tie_break not in ("random", "probability"):
            raise InvalidArgument(f"unknown tie-break rule {self.tie_break!r}")
        if self.reference_rule not in ("rolling", "fixed"):
            raise InvalidArgument(f"unknown reference rule {self.reference_rule!r}")
        self.train_cfg.validate()
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if isinstance(d.get("train_cfg"), dict):
            d["train_cfg"] = TrainConfig(**d["train_cfg"])
        return cls(**d)


@dataclass
class GeoRunResult:
    best: EvaluatedCandidate | None
    history: list
    all_evaluated: list
    outstanding_count: int = 0
    warnings: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def best_cost(self):
        return self.best.cost if self.best is not None else math.inf

    def to_dict(self):
        return {
            "best": self.best.to_dict() if self.best is not None else None,
            "history": [list(h) for h in self.history],
            "all_evaluated": [c.to_dict() for c in self.all_evaluated],
            "outstanding_count": self.outstanding_count,
            "warnings": list(self.warnings),
            "info": self.info,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            EvaluatedCandidate.from_dict(d["best"]) if d["best"] else None,
            [tuple(h) for h in d["history"]],
            [EvaluatedCandidate.from_dict(c) for c in d["all_evaluated"]],
            d.get("outstanding_count", 0),
            list(d.get("warnings", [])),
            d.get("info", {}),
        )


def _seed_ints(rng_seed, n):
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(rng_seed).spawn(n)]


def _best(cands):
    finite = [c for c in cands if math.isfinite(c.cost)]
    return min(finite, key=lambda c: c.cost) if finite else None


def _train_and_sample(n_vars, data, cfg, seeds):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model = train(init_mps(n_vars, cfg.init_bond, seeds[0]), data, cfg.train_cfg)
    samples = sample(model, cfg.n_mps, seeds[1])
    uniq, counts = unique_rows(samples)
    keys = rows_to_keys(uniq)
    return model, keys, counts, [str(w.message) for w in caught]


def count_outstanding(result, seed_best):
    """Generator-origin candidates strictly cheaper than ``seed_best``."""
    return sum(1 for c in result.all_evaluated
               if c.origin == "generator" and math.isfinite(c.cost) and c.cost < seed_best)


def run_booster(oracle, initial_data, cfg=None):
    """Improve on another solver's evaluations with the MPS generator.

    ``initial_data`` is a list of :class:`EvaluatedCandidate`.  The lowest
    ``seed_percentile`` fraction (counted over the input list, taken over
    distinct finite-cost candidates) forms the seed set.  Generator samples
    are evaluated in descending sample-frequency order until either the
    sample list, ``cfg.eval_budget`` or the oracle budget runs out.
    """
    cfg = (cfg or GeoConfig()).validate()
    if not initial_data:
        raise InvalidArgument("booster needs nonempty initial data")
    kappa = initial_data[0].bits.count("1")
    n_vars = len(initial_data[0].bits)
    archive = {}
    for c in initial_data:
        prev = archive.get(c.bits)
        if prev is None or c.cost < prev.cost:
            archive[c.bits] = EvaluatedCandidate(c.bits, c.weights, c.cost, c.feasible, "seed", dict(c.extra))
    finite = sorted((c for c in archive.values() if math.isfinite(c.cost)), key=lambda c: (c.cost, c.bits))
    if not finite:
        raise InvalidArgument("initial data has no finite-cost candidate")
    n_seed = max(1, int(round(cfg.seed_percentile * len(initial_data))))
    seed_set = finite[:n_seed]
    seed_best = seed_set[0].cost
    history = [(0, 0, seed_best)]
    notes = []
    used = 0
    best_so_far = seed_best
    max_iter = cfg.max_iterations if cfg.max_iterations is not None else math.inf
    temps = []
    it = 0
    stall = 0
    exhausted = False
    while it < max_iter and not exhausted:
        it += 1
        seeds = _seed_ints((cfg.rng_seed, it), 3)
        costs = [c.cost for c in seed_set]
        temp = default_temperature(costs) if len(costs) >= 2 else 1.0
        temps.append(temp)
        surrogate = build_softmax([c.bits for c in seed_set], costs, temp)
        data = sample_training_set(surrogate, cfg.n_train, seeds[2])
        _, keys, counts, caught = _train_and_sample(n_vars, data, cfg, seeds)
        notes.extend(caught)
        order = np.lexsort((np.array(keys), -counts))
        fresh = [keys[i] for i in order if keys[i].count("1") == kappa and keys[i] not in archive]
        if not fresh:
            notes.append(f"iteration {it}: no new cardinality-valid samples")
            history.append((it, used, best_so_far))
            stall += 1
            if stall >= cfg.max_stall:
                notes.append(f"stopped after {stall} iterations without new samples")
                break
            continue
        stall = 0
        new = []
        for key in fresh:
            if cfg.eval_budget is not None and used >= cfg.eval_budget:
                exhausted = True
                break
            try:
                ev = oracle(key)
            except BudgetExhausted:
                exhausted = True
                break
            used += 1
            ev.origin = "generator"
            ev.extra["iteration"] = it
            archive[key] = ev
            new.append(ev)
            if ev.cost < best_so_far:
                best_so_far = ev.cost
        if exhausted:
            notes.append(f"iteration {it}: evaluation budget exhausted after {used} calls")
        seed_set = seed_set + [c for c in new if math.isfinite(c.cost)]
        history.append((it, used, best_so_far))
    result = GeoRunResult(_best(archive.values()), history, list(archive.values()), 0, notes,
                          {"mode": BOOSTER, "seed_best": seed_best, "n_seed": len(finite[:n_seed]),
                           "temperatures": temps, "evaluations": used, "iterations": it})
    result.outstanding_count = count_outstanding(result, seed_best)
    return result


def _pick_standalone(keys, counts, k, rng, scores=None):
    """Most frequent and least frequent samples, alternating.

    Frequency ties are broken at random, or by ``scores`` (higher first for
    the frequent end, lower first for the rare end) when given.
    """
    if not keys:
        return []
    tie = rng.random(len(keys)) if scores is None else -np.asarray(scores, dtype=float)
    by_desc = sorted(range(len(keys)), key=lambda i: (-counts[i], tie[i]))
    by_asc = sorted(range(len(keys)), key=lambda i: (counts[i], -tie[i] if scores is not None else tie[i]))
    out, taken = [], set()
    queues = [iter(by_desc), iter(by_asc)]
    turn = 0
    while len(out) < min(k, len(keys)):
        for i in queues[turn % 2]:
            if i not in taken:
                taken.add(i)
                out.append(keys[i])
                break
        turn += 1
    return out


def run_standalone(oracle, instance, cfg=None):
    """Budgeted stand-alone search from a random cardinality-valid pool.

    Consumes exactly ``cfg.eval_budget`` oracle calls (fewer only when the
    whole search space has been evaluated) and never evaluates a selection
    twice.
    """
    cfg = (cfg or GeoConfig(mode=STANDALONE)).validate()
    budget = cfg.eval_budget
    if budget is None or budget < 1:
        raise InvalidArgument("stand-alone mode needs eval_budget >= 1")
    n, kappa = instance.n_assets, instance.cardinality
    space = math.comb(n, kappa)
    n_seed = min(cfg.n_seed, space)
    seeds = _seed_ints(cfg.rng_seed, 2)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        state = cold_start(instance, n_seed, seeds[0], oracle)
    notes = [str(w.message) for w in caught]
    t_cov = state.temperature
    rng = np.random.default_rng(seeds[1])
    pool = list(state.seed_pool)
    in_pool = set(pool)
    evaluated = {state.first: state.evaluations[0]}
    best_so_far = state.evaluations[0].cost
    used = 1
    history = [(0, used, best_so_far)]
    temps = []
    it = 0
    try:
        while used < budget and len(evaluated) < space:
            it += 1
            it_seeds = _seed_ints((cfg.rng_seed, it), 3)
            finite = [c.cost for c in evaluated.values() if math.isfinite(c.cost)]
            temp = t_cov
            if cfg.temperature_rule == "cost-std" and len(finite) >= 2:
                sd = float(np.std(finite, ddof=1))
                temp = sd if sd > 0 else t_cov
            temps.append(temp)
            if cfg.reference_rule == "fixed":
                ref = state.sigma_ref
            else:
                ref = reference_cost(temp, min(finite) if finite else 0.0)
            costs = [evaluated[x].cost if x in evaluated else ref for x in pool]
            surrogate = build_softmax(pool, costs, temp)
            data = sample_training_set(surrogate, cfg.n_train, it_seeds[2])
            model, keys, counts, caught = _train_and_sample(n, data, cfg, it_seeds)
            notes.extend(caught)
            want = min(cfg.n_select_standalone, budget - used)
            valid = [i for i, kk in enumerate(keys) if kk.count("1") == kappa and kk not in evaluated]
            vkeys = [keys[i] for i in valid]
            scores = None
            if cfg.tie_break == "probability" and vkeys:
                scores = log_amplitudes(model, keys_to_rows(vkeys))
            picks = _pick_standalone(vkeys, [counts[i] for i in valid], want, rng, scores)
            if len(picks) < want:
                spare = [x for x in pool if x not in evaluated and x not in picks]
                if spare:
                    extra = rng.choice(len(spare), size=min(want - len(picks), len(spare)), replace=False)
                    picks += [spare[i] for i in sorted(extra)]
            while len(picks) < want and len(evaluated) + len(picks) < space:
                cand = random_selection(rng, n, kappa)
                if cand not in evaluated and cand not in picks:
                    picks.append(cand)
            for key in picks:
                ev = oracle(key)
                used += 1
                ev.origin = "generator"
                ev.extra["iteration"] = it
                evaluated[key] = ev
                if key not in in_pool:
                    pool.append(key)
                    in_pool.add(key)
                if ev.cost < best_so_far:
                    best_so_far = ev.cost
            history.append((it, used, best_so_far))
    except BudgetExhausted:
        notes.append(f"oracle budget exhausted after {used} calls")
    result = GeoRunResult(_best(evaluated.values()), history, list(evaluated.values()), 0, notes,
                          {"mode": STANDALONE, "temperatures": temps, "evaluations": used,
                           "iterations": it, "n_seed": n_seed,
                           "covariance_temperature": t_cov})
    first_cost = state.evaluations[0].cost
    result.outstanding_count = count_outstanding(result, first_cost)
    return result
