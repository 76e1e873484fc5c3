"""Benchmark quantities: relative enhancement, frontier-distance metrics and
the Wilcoxon signed-rank comparison."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from decimal import Decimal

import numpy as np

from .errors import InvalidArgument
from .portfolio import FrontierSet

log = logging.getLogger(__name__)

TABLE_COLUMNS = ("Mean", "Median", "Min", "Max", "MEUCD", "VRE", "MRE")


class MetricWarning(UserWarning):
    pass


def relative_enhancement(c_classical, c_geo):
    """Percentage by which ``c_geo`` improves on ``c_classical``.

    Negative values mean the classical strategy found the lower cost.  The
    arithmetic runs in decimal on each input's shortest repr, so reported
    costs such as 2.0 and 1.8 give exactly 10.0.
    """
    if c_classical == 0:
        raise InvalidArgument("relative enhancement is undefined for a zero classical cost")
    c, g = Decimal(repr(float(c_classical))), Decimal(repr(float(c_geo)))
    return float((c - g) / c * 100)


def _as_frontier(f):
    return f if isinstance(f, FrontierSet) else FrontierSet(np.asarray(f, dtype=float))


def _bracket_interp(coord, other, value):
    """Interpolate ``other`` at ``value`` of ``coord`` between the closest
    standard points on either side; out-of-range values clamp to the nearest one."""
    above = np.flatnonzero(coord >= value)
    below = np.flatnonzero(coord <= value)
    if not above.size:
        return float(other[below[np.argmax(coord[below])]])
    if not below.size:
        return float(other[above[np.argmin(coord[above])]])
    j = above[np.argmin(coord[above])]
    k = below[np.argmax(coord[below])]
    if coord[j] == coord[k]:
        return float(other[k])
    return float(other[k] + (other[j] - other[k]) * (value - coord[k]) / (coord[j] - coord[k]))


def _pct(value, ref):
    if ref == 0:
        return math.inf
    return abs(100.0 * (value - ref) / ref)


def pde(standard, heuristic):
    """Per-point percentage deviation of ``heuristic`` from ``standard``.

    For each heuristic point ``(x, y)`` (risk, return), ``x*`` is the
    standard risk interpolated at return ``y`` and ``y*`` the standard return
    interpolated at risk ``x``; the deviation is the smaller of the two
    percentage gaps.
    """
    standard, heuristic = _as_frontier(standard), _as_frontier(heuristic)
    if len(standard) < 2:
        raise InvalidArgument("the standard frontier needs at least 2 points")
    X, Y = standard.risks, standard.returns
    out = []
    for x, y in heuristic.points:
        x_star = _bracket_interp(Y, X, y)
        y_star = _bracket_interp(X, Y, x)
        d = min(_pct(x, x_star), _pct(y, y_star))
        if math.isinf(d):
            warnings.warn(f"point ({x}, {y}) has zero reference coordinates; skipped", MetricWarning,
                          stacklevel=2)
            continue
        out.append(d)
    return out


def meucd_vre_mre(standard, heuristic, debug=False):
    """Nearest-standard-point distances: (MEUCD, VRE, MRE).

    VRE and MRE average percentage risk and return errors relative to the
    heuristic coordinates; points with a zero coordinate are left out of
    that average with a warning.  With ``debug=True`` a fourth value is
    returned: MEUCD under the printed formula without squares,
    ``sqrt(|dX + dY|)``, for comparison with published tables.
    """
    standard, heuristic = _as_frontier(standard), _as_frontier(heuristic)
    if not len(standard) or not len(heuristic):
        raise InvalidArgument("both frontiers must be nonempty")
    S = standard.points
    dists, vre, mre, raw = [], [], [], []
    for x, y in heuristic.points:
        d2 = ((S[:, 0] - x) ** 2 + (S[:, 1] - y) ** 2)
        X_star, Y_star = S[int(np.argmin(d2))]
        dists.append(math.sqrt((X_star - x) ** 2 + (Y_star - y) ** 2))
        raw.append(math.sqrt(abs((X_star - x) + (Y_star - y))))
        if x == 0:
            warnings.warn(f"zero risk coordinate at ({x}, {y}) excluded from VRE", MetricWarning, stacklevel=2)
        else:
            vre.append(100.0 * abs(X_star - x) / abs(x))
        if y == 0:
            warnings.warn(f"zero return coordinate at ({x}, {y}) excluded from MRE", MetricWarning, stacklevel=2)
        else:
            mre.append(100.0 * abs(Y_star - y) / abs(y))
    meucd = float(np.mean(dists))
    out = (meucd, float(np.mean(vre)) if vre else math.nan, float(np.mean(mre)) if mre else math.nan)
    if debug:
        unsquared = float(np.mean(raw))
        log.debug("MEUCD squared form %.6g vs printed form %.6g", meucd, unsquared)
        return out + (unsquared,)
    return out


@dataclass
class MetricReport:
    pde_mean: float
    pde_median: float
    pde_min: float
    pde_max: float
    meucd: float
    vre: float
    mre: float
    n_heuristic: int
    n_standard: int
    pde_values: list = field(default_factory=list, repr=False)

    def row(self):
        """Values in the column order of :data:`TABLE_COLUMNS`."""
        return [self.pde_mean, self.pde_median, self.pde_min, self.pde_max, self.meucd, self.vre, self.mre]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def metric_report(standard, heuristic):
    standard, heuristic = _as_frontier(standard), _as_frontier(heuristic)
    values = pde(standard, heuristic)
    if not values:
        raise InvalidArgument("no heuristic point produced a PDE value")
    arr = np.asarray(values)
    meucd, vre, mre = meucd_vre_mre(standard, heuristic)
    return MetricReport(float(arr.mean()), float(np.median(arr)), float(arr.min()), float(arr.max()),
                        meucd, vre, mre, len(heuristic), len(standard), values)


@dataclass
class WilcoxonOutcome:
    wins: int
    losses: int
    ties: int
    statistic: float
    p_value: float
    decision: str
    method: str

    def to_dict(self):
        return asdict(self)


def _exact_p(ranks, stat):
    """Two-sided exact p for ``min(W+, W-)`` under random signs.

    Ranks may be half-integers after tie averaging, so the sum is tracked on
    a doubled integer scale.
    """
    doubled = [int(round(2 * r)) for r in ranks]
    total = sum(doubled)
    dist = np.zeros(total + 1)
    dist[0] = 1.0
    for r in doubled:
        shifted = np.zeros_like(dist)
        shifted[r:] = dist[:total + 1 - r]
        dist = dist + shifted
    dist /= 2.0 ** len(doubled)
    cutoff = int(round(2 * stat))
    return min(1.0, 2.0 * float(dist[:cutoff + 1].sum()))


def _asymptotic_p(ranks, stat):
    n = len(ranks)
    mean = n * (n + 1) / 4.0
    _, counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(((counts**3 - counts).sum())) / 48.0
    if var <= 0:
        return 1.0
    z = (stat - mean) / math.sqrt(var)
    return min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))


def wilcoxon_signed_rank(a, b, alpha=0.05, method="auto"):
    """Two-sided Wilcoxon signed-rank test on paired results.

    ``wins`` counts pairs where ``a`` is lower.  Zero differences are
    dropped and tied magnitudes get averaged ranks.  ``method="auto"`` uses
    the exact null distribution below 10 nonzero pairs and the normal
    approximation with tie correction otherwise; ``"exact"`` and
    ``"asymptotic"`` force one or the other.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise InvalidArgument("a and b must be 1-d sequences of equal length")
    if method not in ("auto", "exact", "asymptotic"):
        raise InvalidArgument(f"unknown method {method!r}")
    diff = b - a
    wins = int((diff > 0).sum())
    losses = int((diff < 0).sum())
    ties = int((diff == 0).sum())
    nz = diff[diff != 0]
    if nz.size == 0:
        return WilcoxonOutcome(wins, losses, ties, 0.0, 1.0, "retain", "degenerate")
    if nz.size < 5:
        raise InvalidArgument(f"need at least 5 nonzero differences, got {nz.size}")
    mags = np.abs(nz)
    order = np.argsort(mags, kind="stable")
    ranks = np.empty(nz.size)
    sorted_mags = mags[order]
    i = 0
    while i < nz.size:
        j = i
        while j + 1 < nz.size and sorted_mags[j + 1] == sorted_mags[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    w_plus = float(ranks[nz > 0].sum())
    w_minus = float(ranks[nz < 0].sum())
    stat = min(w_plus, w_minus)
    if method == "auto":
        method = "exact" if nz.size < 10 else "asymptotic"
    p = _exact_p(ranks, stat) if method == "exact" else _asymptotic_p(ranks, stat)
    return WilcoxonOutcome(wins, losses, ties, stat, p, "reject" if p < alpha else "retain", method)
