import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from bucketsynth.metrics import (
    ScoreKind,
    improvement_factor,
    ks_statistic,
    marginal_quality,
    medians,
    ml_penalty,
    pair_quality,
    quality_report,
)
from bucketsynth.schema import Kind, make_table

R, T = Kind.REAL, Kind.TEXT


def test_marginal_examples():
    assert marginal_quality([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], R).value == 1.0
    assert marginal_quality(["a", "b"], ["c", "d"], T).value == 0.0
    q = marginal_quality(["a"] * 6 + ["b"] * 4, ["a"] * 5 + ["b"] * 5, T)
    assert q.value == pytest.approx(0.9)
    assert q.kind is ScoreKind.MARGINAL_CATEGORICAL


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
@given(
    st.lists(st.floats(-100, 100), min_size=1, max_size=60),
    st.lists(st.floats(-100, 100), min_size=1, max_size=60),
)
def test_ks_matches_scipy(a, b):
    assert ks_statistic(np.array(a), np.array(b)) == pytest.approx(stats.ks_2samp(a, b, method="asymp").statistic, abs=1e-12)


def test_ks_counts_nulls_as_mass():
    assert ks_statistic(np.array([1.0, np.nan]), np.array([1.0, 1.0])) == pytest.approx(0.5)


def test_pair_examples():
    x = np.linspace(0, 1, 50).tolist()
    assert pair_quality((x, x), (x, x), (R, R)).value == pytest.approx(1.0)
    rev = x[::-1]
    q = pair_quality((x, x), (x, rev), (R, R))
    assert q.value == pytest.approx(0.0, abs=1e-12) and q.kind is ScoreKind.PAIR_CONTINUOUS


def test_contingency_hand_example():
    cells = [("a", "x"), ("a", "y"), ("b", "x"), ("b", "y")]
    orig = [c for c in cells for _ in range(25)]
    syn = [cells[0]] * 15 + [cells[1]] * 25 + [cells[2]] * 25 + [cells[3]] * 35
    q = pair_quality(tuple(zip(*orig)), tuple(zip(*syn)), (T, T))
    assert q.value == pytest.approx(0.9)
    assert q.kind is ScoreKind.PAIR_CATEGORICAL


def test_constant_column_falls_back_to_contingency():
    x = list(range(20))
    c = [5.0] * 20
    q = pair_quality((x, c), (x, c), (R, R))
    assert q.kind is ScoreKind.PAIR_CATEGORICAL and q.value == 1.0


def test_mixed_pair_bins_by_original_deciles():
    rng = np.random.default_rng(0)
    x = rng.normal(size=1000)
    cat = np.where(x > 0, "hi", "lo").tolist()
    shifted = (x + 5).tolist()  # every synthetic value lands in the top decile
    q = pair_quality((x.tolist(), cat), (shifted, cat), (R, T))
    assert q.value < 0.2


def test_improvement_factor():
    assert improvement_factor(0.98, 0.99) == pytest.approx(2.0)
    assert improvement_factor(0.7, 0.7) == 1.0
    assert improvement_factor(0.950, 0.9994) == pytest.approx(0.05 / 0.0006)
    assert improvement_factor(0.9, 1.0) == math.inf


def test_ml_penalty():
    assert ml_penalty(0.9, 0.9) == 0.0
    assert ml_penalty(0.935, 0.917) == pytest.approx(0.018 / 0.935)
    assert ml_penalty(0.8, 1.0) == pytest.approx(-0.2)
    assert ml_penalty(0.0, 0.0) == 0.0


@given(st.lists(st.sampled_from("abcd"), min_size=2, max_size=40), st.randoms(use_true_random=False))
def test_scores_ignore_row_order_and_labels(col, rnd):
    other = col[:]
    rnd.shuffle(other)
    relabel = {"a": "z", "b": "y", "c": "x", "d": "w"}
    base = marginal_quality(col, other[: len(col) // 2 + 1], T).value
    assert marginal_quality([relabel[v] for v in col], [relabel[v] for v in other[: len(col) // 2 + 1]], T).value == pytest.approx(base)
    assert marginal_quality(col, other, T).value == pytest.approx(1.0)
    pair = pair_quality((col, other), (other, col), (T, T)).value
    flipped = pair_quality(([relabel[v] for v in col], other), ([relabel[v] for v in other], col), (T, T)).value
    assert flipped == pytest.approx(pair)


def test_report_ignores_column_order():
    rng = np.random.default_rng(2)
    rows = [(float(a), int(b), str(c)) for a, b, c in zip(rng.normal(size=200), rng.integers(0, 5, 200), rng.choice(list("pq"), 200))]
    orig = make_table(["a", "b", "c"], [R, Kind.INTEGER, T], rows)
    syn = make_table(["c", "a", "b"], [T, R, Kind.INTEGER], [(r[2], r[0], r[1]) for r in rows])
    lines = quality_report(orig, syn)
    assert len(lines) == 6 and all(ln.score == pytest.approx(1.0) for ln in lines)
    assert medians(lines) == {"marginal": pytest.approx(1.0), "pair": pytest.approx(1.0)}
