import itertools
import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import wilcoxon

from geo_opt.errors import InvalidArgument
from geo_opt.metrics import (
    TABLE_COLUMNS,
    MetricReport,
    MetricWarning,
    meucd_vre_mre,
    metric_report,
    pde,
    relative_enhancement,
    wilcoxon_signed_rank,
)
from geo_opt.portfolio import FrontierSet

TABLE = json.loads((Path(__file__).parent / "data" / "table1.json").read_text())


def test_relative_enhancement():
    assert relative_enhancement(2.0, 1.8) == 10.0
    assert relative_enhancement(3.7, 3.7) == 0.0
    assert relative_enhancement(1.8, 2.0) == pytest.approx(-11.111111111111111)
    with pytest.raises(InvalidArgument):
        relative_enhancement(0.0, 1.0)


def test_pde_hand_value():
    assert pde([[1, 1], [2, 2]], [[1.5, 1.65]]) == [pytest.approx(100 * 0.15 / 1.65, abs=1e-10)]


def test_pde_zero_on_segment_and_identity():
    std = FrontierSet(np.array([[1.0, 1.0], [2.0, 3.0], [4.0, 4.0]]))
    assert pde(std, [[1.5, 2.0]]) == [0.0]
    rep = metric_report(std, std)
    assert rep.row() == [0.0] * 7


def test_pde_clamps_outside_range():
    # beyond the last standard point both interpolants clamp to it
    assert pde([[1, 1], [2, 2]], [[3.0, 2.0]]) == [0.0]
    assert pde([[1, 1], [2, 2]], [[2.0, 3.0]])[0] == pytest.approx(0.0)


def test_pde_needs_two_points():
    with pytest.raises(InvalidArgument):
        pde([[1, 1]], [[1, 1]])


def test_meucd_hand_value():
    meucd, vre, mre = meucd_vre_mre([[1, 1]], [[1.3, 1.4]])
    assert meucd == pytest.approx(0.5, abs=1e-10)
    assert vre == pytest.approx(100 * 0.3 / 1.3, abs=1e-10)
    assert mre == pytest.approx(100 * 0.4 / 1.4, abs=1e-10)
    assert meucd_vre_mre([[1, 1]], [[1.3, 1.4]], debug=True)[3] == pytest.approx(math.sqrt(0.7))


def test_meucd_zero_coordinate_warns():
    with pytest.warns(MetricWarning):
        _, vre, _ = meucd_vre_mre([[1, 1]], [[0.0, 1.0], [1.0, 2.0]])
    assert vre == 0.0


def test_report_row_and_roundtrip():
    std = np.array([[0.1, 0.01], [0.2, 0.02], [0.4, 0.025]])
    heur = np.array([[0.12, 0.0105], [0.25, 0.021], [0.45, 0.024]])
    rep = metric_report(std, heur)
    vals = sorted(rep.pde_values)
    assert rep.pde_min == vals[0] and rep.pde_max == vals[-1] and rep.pde_median == vals[1]
    assert len(TABLE_COLUMNS) == len(rep.row())
    assert MetricReport.from_dict(rep.to_dict()) == rep


@settings(max_examples=40, deadline=None)
@given(scale=st.floats(0.01, 100), seed=st.integers(0, 10**6))
def test_scale_covariance(scale, seed):
    rng = np.random.default_rng(seed)
    std = np.cumsum(rng.uniform(0.1, 1, size=(6, 2)), axis=0)
    heur = std[rng.permutation(6)[:4]] * rng.uniform(0.9, 1.1, size=(4, 2))
    base = metric_report(std, heur)
    scaled = metric_report(std * scale, heur * scale)
    np.testing.assert_allclose(scaled.pde_values, base.pde_values, rtol=1e-9, atol=1e-12)
    assert scaled.meucd == pytest.approx(base.meucd * scale, rel=1e-9)
    assert scaled.vre == pytest.approx(base.vre, rel=1e-9)
    assert scaled.mre == pytest.approx(base.mre, rel=1e-9)
    # order of heuristic points does not matter
    assert sorted(pde(std, heur[::-1])) == pytest.approx(sorted(base.pde_values))


@pytest.mark.parametrize("column", ["GTS", "PBILD"])
def test_wilcoxon_table_fixture(column):
    exp = TABLE["expected"][column]
    out = wilcoxon_signed_rank(TABLE["columns"]["TN-GEO"], TABLE["columns"][column], method="asymptotic")
    assert (out.wins, out.losses, out.ties) == (exp["wins"], exp["losses"], exp["ties"])
    assert abs(out.p_value - exp["p"]) <= 0.005
    assert out.decision == "reject"


def brute_exact_p(a, b):
    """Two-sided p by enumerating every sign assignment of the averaged ranks."""
    d = np.asarray(b, float) - np.asarray(a, float)
    d = d[d != 0]
    mags = np.abs(d)
    ranks = np.array([np.mean([1 + i for i, m in enumerate(sorted(mags)) if m == x]) for x in mags])
    stat = min(ranks[d > 0].sum(), ranks[d < 0].sum())
    total = ranks.sum()
    hits = 0
    for mask in itertools.product((0, 1), repeat=len(ranks)):
        w = float(np.dot(mask, ranks))
        hits += min(w, total - w) <= stat + 1e-9
    return hits / 2 ** len(ranks)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(5, 11))
def test_exact_p_against_enumeration(seed, n):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 6, n).astype(float)
    b = a + rng.choice([-3, -2, -1, 1, 2, 3], n)
    assert wilcoxon_signed_rank(a, b, method="exact").p_value == pytest.approx(brute_exact_p(a, b), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(6, 30))
def test_wilcoxon_against_scipy_and_symmetry(seed, n):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=n)
    b = a + rng.normal(size=n)
    tied = rng.integers(0, 6, n).astype(float)
    tied_b = tied + rng.integers(-3, 4, n)
    cases = [(a, b, "exact", "exact"), (a, b, "asymptotic", "approx")]
    if np.count_nonzero(tied - tied_b) >= 5:
        cases.append((tied, tied_b, "asymptotic", "approx"))
    for x, y, method, sp in cases:
        ours = wilcoxon_signed_rank(x, y, method=method)
        ref = wilcoxon(x, y, method=sp, correction=False, zero_method="wilcox")
        assert ours.statistic == ref.statistic
        assert ours.p_value == pytest.approx(ref.pvalue, rel=1e-9)
        flipped = wilcoxon_signed_rank(y, x, method=method)
        assert flipped.p_value == ours.p_value
        assert (flipped.wins, flipped.losses) == (ours.losses, ours.wins)
        assert ours.wins + ours.losses + ours.ties == n


def test_wilcoxon_degenerate_and_errors():
    out = wilcoxon_signed_rank([1, 2, 3], [1, 2, 3])
    assert (out.ties, out.p_value, out.decision, out.statistic) == (3, 1.0, "retain", 0.0)
    with pytest.raises(InvalidArgument):
        wilcoxon_signed_rank([1, 2, 3], [2, 3, 4])
    with pytest.raises(InvalidArgument):
        wilcoxon_signed_rank([1, 2], [1, 2, 3])
