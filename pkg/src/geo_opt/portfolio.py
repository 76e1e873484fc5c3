"""Cardinality-constrained mean-variance portfolios.

A candidate is a bitstring selecting ``kappa`` of ``N`` assets.  Given a
selection, the continuous allocation is a small convex QP solved by
:mod:`geo_opt.qp`; the QP value is the candidate's cost.
"""
from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyFrontierError, InvalidArgument, InvalidCandidate, InvalidData
from .qp import box_feasible_point, return_target_feasible_point, solve_box_qp

RETURN_TARGET = "return-target"
RISK_AVERSION = "risk-aversion"


@dataclass(frozen=True)
class PriceSeries:
    asset_ids: tuple
    prices: np.ndarray
    period_label: str = "daily"

    def __post_init__(self):
        prices = np.asarray(self.prices, dtype=float)
        if prices.ndim != 2 or prices.shape[1] != len(self.asset_ids):
            raise InvalidData("price matrix must be T x N with one column per asset id")
        if prices.shape[0] < 2:
            raise InvalidData("need at least two price rows")
        if np.isnan(prices).any():
            raise InvalidData("missing price cell", row=int(np.argwhere(np.isnan(prices))[0, 0]))
        bad = np.argwhere(prices <= 0)
        if bad.size:
            raise InvalidData("prices must be positive", row=int(bad[0, 0]))
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "asset_ids", tuple(self.asset_ids))


@dataclass(frozen=True)
class ReturnStats:
    mean_returns: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.mean_returns, dtype=float).ravel()
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if cov.shape != (r.size, r.size):
            raise InvalidData(f"covariance shape {cov.shape} does not match {r.size} assets")
        if np.abs(cov - cov.T).max(initial=0.0) > 1e-12 * max(1.0, np.abs(cov).max()):
            raise InvalidData("covariance must be symmetric")
        cov = 0.5 * (cov + cov.T)
        if r.size and np.linalg.eigvalsh(cov).min() < -1e-10:
            raise InvalidData("covariance must be positive semidefinite")
        object.__setattr__(self, "mean_returns", r)
        object.__setattr__(self, "covariance", cov)

    @property
    def n_assets(self):
        return self.mean_returns.size


@dataclass(frozen=True)
class PortfolioInstance:
    stats: ReturnStats
    cardinality: int
    objective_mode: str = RETURN_TARGET
    rho: float = 0.0
    lam: float = 0.5
    lower_bounds: np.ndarray = None
    upper_bounds: np.ndarray = None

    def __post_init__(self):
        n = self.stats.n_assets
        lo = np.zeros(n) if self.lower_bounds is None else np.broadcast_to(
            np.asarray(self.lower_bounds, dtype=float), (n,)).copy()
        hi = np.ones(n) if self.upper_bounds is None else np.broadcast_to(
            np.asarray(self.upper_bounds, dtype=float), (n,)).copy()
        object.__setattr__(self, "lower_bounds", lo)
        object.__setattr__(self, "upper_bounds", hi)
        k = self.cardinality
        if not 1 <= k <= n:
            raise InvalidArgument(f"cardinality must be in [1, {n}], got {k}")
        if self.objective_mode not in (RETURN_TARGET, RISK_AVERSION):
            raise InvalidArgument(f"unknown objective mode {self.objective_mode!r}")
        if not 0.0 <= self.lam <= 1.0:
            raise InvalidArgument("risk-aversion lambda must lie in [0, 1]")
        if np.any(lo < 0) or np.any(lo >= 1) or np.any(hi <= 0) or np.any(hi > 1) or np.any(lo >= hi):
            raise InvalidArgument("bounds must satisfy 0 <= l < u <= 1")
        # every kappa-subset must admit sum(w) = 1
        if np.sort(lo)[-k:].sum() > 1 + 1e-12 or np.sort(hi)[:k].sum() < 1 - 1e-12:
            raise InvalidArgument("bounds make some cardinality-valid selection infeasible")

    @property
    def n_assets(self):
        return self.stats.n_assets

    def with_mode(self, objective_mode, rho=None, lam=None):
        return PortfolioInstance(self.stats, self.cardinality, objective_mode,
                                 self.rho if rho is None else rho,
                                 self.lam if lam is None else lam,
                                 self.lower_bounds, self.upper_bounds)

    def fingerprint(self):
        h = hashlib.sha256()
        for arr in (self.stats.covariance, self.stats.mean_returns, self.lower_bounds, self.upper_bounds):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        h.update(f"{self.cardinality}|{self.objective_mode}|{self.rho!r}|{self.lam!r}".encode())
        return h.hexdigest()


def as_bits(sel, n=None):
    if isinstance(sel, str):
        sel = [int(c) for c in sel]
    bits = np.asarray(sel, dtype=np.uint8).ravel()
    if n is not None and bits.size != n:
        raise InvalidCandidate(f"selection has length {bits.size}, expected {n}")
    return bits


def bits_key(bits):
    return "".join("1" if b else "0" for b in bits)


@dataclass
class EvaluatedCandidate:
    bits: str
    weights: np.ndarray
    cost: float
    feasible: bool
    origin: str = "oracle"
    extra: dict = field(default_factory=dict)

    @property
    def selection(self):
        return as_bits(self.bits)

    def to_dict(self):
        return {"bits": self.bits, "weights": [float(x) for x in self.weights],
                "cost": self.cost if math.isfinite(self.cost) else None,
                "feasible": self.feasible, "origin": self.origin, "extra": self.extra}

    @classmethod
    def from_dict(cls, d):
        cost = math.inf if d["cost"] is None else d["cost"]
        return cls(d["bits"], np.asarray(d["weights"], dtype=float), cost, d["feasible"],
                   d.get("origin", "oracle"), d.get("extra", {}))


@dataclass
class FrontierSet:
    """(risk, return) points sorted by strictly increasing return."""

    points: np.ndarray
    kind: str = "standard"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if pts.size:
            pts = pts[np.argsort(pts[:, 1], kind="stable")]
            keep = np.concatenate([[True], np.diff(pts[:, 1]) > 0])
            pts = pts[keep]
        self.points = pts

    @property
    def risks(self):
        return self.points[:, 0]

    @property
    def returns(self):
        return self.points[:, 1]

    def __len__(self):
        return self.points.shape[0]

    def efficient_part(self):
        """Points at or above the minimum-risk return."""
        if not len(self):
            return self
        k = int(np.argmin(self.risks))
        return FrontierSet(self.points[k:], self.kind)


def compute_returns(prices):
    """Mean per-period relative returns and their unbiased sample covariance."""
    if not isinstance(prices, PriceSeries):
        prices = PriceSeries(tuple(str(i) for i in range(np.shape(prices)[1])), prices)
    p = prices.prices
    rets = (p[1:] - p[:-1]) / p[:-1]
    mean = rets.mean(axis=0)
    if rets.shape[0] < 2:
        cov = np.zeros((p.shape[1], p.shape[1]))
    else:
        dev = rets - mean
        cov = dev.T @ dev / (rets.shape[0] - 1)
    return ReturnStats(mean, cov)


def solve_inner_qp(instance, sel):
    """Optimal weights and cost for one asset selection.

    In return-target mode the cost is the portfolio standard deviation at
    return ``rho``; in risk-aversion mode it is
    ``lam * variance - (1 - lam) * mean return``.  Inconsistent constraints
    give ``feasible=False`` and an infinite cost.
    """
    n = instance.n_assets
    bits = as_bits(sel, n)
    if int(bits.sum()) != instance.cardinality:
        raise InvalidCandidate(
            f"selection has {int(bits.sum())} assets, cardinality is {instance.cardinality}")
    idx = np.flatnonzero(bits)
    cov = instance.stats.covariance[np.ix_(idx, idx)]
    r = instance.stats.mean_returns[idx]
    lo, hi = instance.lower_bounds[idx], instance.upper_bounds[idx]
    weights = np.zeros(n)
    key = bits_key(bits)
    if instance.objective_mode == RETURN_TARGET:
        w0 = return_target_feasible_point(r, instance.rho, lo, hi)
        if w0 is None:
            return EvaluatedCandidate(key, weights, math.inf, False)
        E = np.vstack([np.ones(idx.size), r])
        res = solve_box_qp(2.0 * cov, np.zeros(idx.size), E, np.array([1.0, instance.rho]), lo, hi, w0)
        weights[idx] = res.w
        variance = max(float(res.w @ cov @ res.w), 0.0)
        return EvaluatedCandidate(key, weights, math.sqrt(variance), True)
    lam = instance.lam
    w0 = box_feasible_point(lo, hi)
    if w0 is None:
        return EvaluatedCandidate(key, weights, math.inf, False)
    res = solve_box_qp(2.0 * lam * cov, -(1.0 - lam) * r, np.ones((1, idx.size)), np.array([1.0]), lo, hi, w0)
    weights[idx] = res.w
    value = lam * float(res.w @ cov @ res.w) - (1.0 - lam) * float(r @ res.w)
    return EvaluatedCandidate(key, weights, value, True)


def portfolio_point(instance, weights):
    """(standard deviation, mean return) of a weight vector."""
    w = np.asarray(weights, dtype=float)
    var = max(float(w @ instance.stats.covariance @ w), 0.0)
    return math.sqrt(var), float(w @ instance.stats.mean_returns)


def standard_frontier(stats, bounds=None, n_points=100, risk="std"):
    """Efficient frontier without the cardinality constraint.

    Sweeps the return target over ``[min r, max r]`` on a uniform grid and
    solves the bounded mean-variance QP at each level; infeasible grid
    points are dropped.  ``risk`` chooses standard deviation or variance as
    the risk coordinate.
    """
    if n_points < 2:
        raise InvalidArgument("n_points must be >= 2")
    n = stats.n_assets
    lo, hi = (np.zeros(n), np.ones(n)) if bounds is None else (
        np.broadcast_to(np.asarray(bounds[0], dtype=float), (n,)),
        np.broadcast_to(np.asarray(bounds[1], dtype=float), (n,)))
    r, cov = stats.mean_returns, stats.covariance
    E = np.vstack([np.ones(n), r])
    pts = []
    for rho in np.linspace(r.min(), r.max(), n_points):
        w0 = return_target_feasible_point(r, rho, lo, hi)
        if w0 is None:
            continue
        res = solve_box_qp(2.0 * cov, np.zeros(n), E, np.array([1.0, rho]), lo, hi, w0)
        var = max(float(res.w @ cov @ res.w), 0.0)
        pts.append((math.sqrt(var) if risk == "std" else var, float(r @ res.w)))
    if not pts:
        raise EmptyFrontierError("no feasible return level on the grid")
    return FrontierSet(np.array(pts), "standard")


def _gbm_prices(rng, n_assets, n_periods, n_factors=3):
    """Daily prices from a factor model with lognormal increments."""
    drift = rng.normal(0.0005, 0.0004, n_assets)
    vol = rng.uniform(0.008, 0.025, n_assets)
    loadings = rng.normal(0.0, 1.0, (n_assets, n_factors))
    loadings /= np.linalg.norm(loadings, axis=1, keepdims=True)
    beta = rng.uniform(0.3, 0.8, n_assets)
    factors = rng.normal(size=(n_periods, n_factors))
    idio = rng.normal(size=(n_periods, n_assets))
    shocks = np.sqrt(beta) * (factors @ loadings.T) + np.sqrt(1 - beta) * idio
    log_ret = drift - 0.5 * vol**2 + vol * shocks
    start = rng.uniform(20, 200, n_assets)
    return start * np.exp(np.vstack([np.zeros(n_assets), np.cumsum(log_ret, axis=0)]))


def generate_synthetic_instance(n_assets, kappa, seed, n_periods=500, rho=None):
    """Return-target instance built from a simulated daily price history.

    The default target return is the mean of the asset mean returns.
    """
    if not 1 <= kappa <= n_assets:
        raise InvalidArgument("need 1 <= kappa <= n_assets")
    rng = np.random.default_rng(seed)
    prices = PriceSeries(tuple(f"A{i:03d}" for i in range(n_assets)),
                         _gbm_prices(rng, n_assets, n_periods))
    stats = compute_returns(prices)
    target = float(stats.mean_returns.mean()) if rho is None else rho
    return PortfolioInstance(stats, kappa, RETURN_TARGET, rho=target)


def read_price_csv(path, period_label="daily"):
    """Price table: header ``date,<asset ids...>``, one ISO date per row."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = []
        for i, row in enumerate(reader, start=1):
            if not row:
                continue
            try:
                rows.append([float(v) if v.strip() else math.nan for v in row[1:]])
            except ValueError as exc:
                raise InvalidData(f"unparseable price ({exc})", row=i) from None
    return PriceSeries(tuple(header[1:]), np.array(rows), period_label)


def read_orlib_port(path):
    """Parse an OR-Library ``portN.txt`` file into :class:`ReturnStats`.

    Layout: asset count, then one ``mean stddev`` line per asset, then
    ``i j correlation`` triples with 1-based indices.
    """
    tokens = Path(path).read_text().split()
    if not tokens:
        raise InvalidData("empty OR-Library file")
    n = int(tokens[0])
    vals = tokens[1:]
    if len(vals) < 2 * n:
        raise InvalidData(f"expected {n} mean/stddev pairs")
    ms = np.array(vals[:2 * n], dtype=float).reshape(n, 2)
    mean, sd = ms[:, 0], ms[:, 1]
    rest = vals[2 * n:]
    if len(rest) % 3:
        raise InvalidData("correlation section is not a list of triples")
    corr = np.eye(n)
    for k in range(0, len(rest), 3):
        i, j, c = int(rest[k]) - 1, int(rest[k + 1]) - 1, float(rest[k + 2])
        if not (0 <= i < n and 0 <= j < n):
            raise InvalidData(f"asset index out of range in triple {k // 3 + 1}", row=2 + n + k // 3)
        corr[i, j] = corr[j, i] = c
    return ReturnStats(mean, corr * np.outer(sd, sd))
