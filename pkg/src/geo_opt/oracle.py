"""Black-box cost oracles with call accounting."""
from __future__ import annotations

import math
import threading

import numpy as np

from .errors import BudgetExhausted, InvalidArgument
from .portfolio import EvaluatedCandidate, as_bits, bits_key, solve_inner_qp


class CostOracle:
    """Counts evaluations of ``fn`` and enforces an optional call budget.

    ``fn`` maps a bitstring key (``"0101..."``) to an
    :class:`EvaluatedCandidate` or to a plain float cost.  Every call costs
    exactly one unit of budget, including repeated selections.
    """

    thread_safe = True

    def __init__(self, fn, n_vars, budget=None):
        if budget is not None and budget < 0:
            raise InvalidArgument("budget must be nonnegative")
        self._fn = fn
        self.n_vars = n_vars
        self.budget = budget
        self.calls = 0
        self._lock = threading.Lock()

    @property
    def remaining(self):
        return math.inf if self.budget is None else self.budget - self.calls

    def __call__(self, sel):
        key = bits_key(as_bits(sel, self.n_vars))
        with self._lock:
            if self.budget is not None and self.calls >= self.budget:
                raise BudgetExhausted(f"oracle budget of {self.budget} calls is spent")
            self.calls += 1
        out = self._fn(key)
        if not isinstance(out, EvaluatedCandidate):
            cost = float(out)
            out = EvaluatedCandidate(key, np.zeros(0), cost, math.isfinite(cost))
        return out


class PortfolioOracle(CostOracle):
    """Inner-QP cost of a selection for one portfolio instance.

    Selections with the wrong number of assets are infeasible (infinite
    cost) but still consume a call.  Solved selections are memoized; the
    call counter is unaffected by the cache.
    """

    def __init__(self, instance, budget=None, cache=None):
        self.instance = instance
        self._cache = {} if cache is None else cache
        super().__init__(self._evaluate, instance.n_assets, budget)

    def _evaluate(self, key):
        hit = self._cache.get(key)
        if hit is None:
            if key.count("1") != self.instance.cardinality:
                hit = EvaluatedCandidate(key, np.zeros(self.instance.n_assets), math.inf, False)
            else:
                hit = solve_inner_qp(self.instance, key)
            self._cache[key] = hit
        return EvaluatedCandidate(hit.bits, hit.weights, hit.cost, hit.feasible)
