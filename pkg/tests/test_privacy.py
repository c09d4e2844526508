import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from statsmodels.stats.proportion import proportion_confint

from bucketsynth.datasets import make_dataset
from bucketsynth.privacy import (
    AttackConfig,
    PrivacyError,
    column_shuffle_synthesizer,
    identity_synthesizer,
    infer_secret,
    pi_half_width,
    precision_improvement,
    run_suite,
    split_test_control,
    wilson_interval,
)
from bucketsynth.schema import Kind, make_table


def numbers(rows):
    return make_table(["k", "s"], [Kind.REAL, Kind.TEXT], rows)


def test_split():
    t = numbers([(float(i), "x") for i in range(100)])
    test, control = split_test_control(t, 0.5, np.random.default_rng(0))
    assert len(test) == len(control) == 50
    assert sorted(test.rows + control.rows) == sorted(t.rows)
    again, _ = split_test_control(t, 0.5, np.random.default_rng(0))
    assert again.rows == test.rows
    with pytest.raises(PrivacyError):
        split_test_control(t, 1.0, np.random.default_rng(0))


def test_config_validation():
    with pytest.raises(PrivacyError):
        AttackConfig(n_attacks=0)
    with pytest.raises(PrivacyError):
        AttackConfig(confidence_cut=0)


def test_exact_match_wins():
    syn = numbers([(1.0, "a"), (5.0, "b"), (9.0, "c")])
    assert infer_secret(syn, {"k": 5.0, "s": "?"}, ["k"], "s") == "b"


def test_nearest_neighbour_on_one_column():
    syn = numbers([(1.0, "low"), (99.0, "high")])
    assert infer_secret(syn, {"k": 0.0}, ["k"], "s") == "low"
    assert infer_secret(syn, {"k": 100.0}, ["k"], "s") == "high"


def test_ties_go_to_the_first_row():
    syn = numbers([(1.0, "first"), (3.0, "second")])
    assert infer_secret(syn, {"k": 2.0}, ["k"], "s") == "first"


def gower_oracle(syn_rows, victim, kinds):
    """Per-column Gower terms summed by hand, argmin with lowest index."""
    best, best_d = None, None
    for i, row in enumerate(syn_rows):
        d = 0.0
        for j, kind in enumerate(kinds):
            a, b = row[j], victim[j]
            if a is None or b is None:
                d += 0.0 if a is None and b is None else 1.0
            elif kind == "num":
                present = [r[j] for r in syn_rows if r[j] is not None]
                span = (max(present) - min(present)) if present else 0.0
                d += min(abs(a - b) / (span or 1.0), 1.0)
            else:
                d += 0.0 if a == b else 1.0
        if best_d is None or d < best_d:
            best, best_d = i, d
    return best


cell_num = st.one_of(st.none(), st.integers(0, 20).map(float))
cell_cat = st.one_of(st.none(), st.sampled_from(["u", "v", "w"]))


@given(st.lists(st.tuples(cell_num, cell_cat, st.integers(0, 9)), min_size=3, max_size=3), st.tuples(cell_num, cell_cat))
def test_prediction_matches_exhaustive_gower(rows, victim):
    syn = make_table(["n", "c", "secret"], [Kind.REAL, Kind.TEXT, Kind.INTEGER], rows)
    got = infer_secret(syn, {"n": victim[0], "c": victim[1]}, ["n", "c"], "secret")
    assert got == rows[gower_oracle(rows, victim, ["num", "cat"])][2]


def test_precision_improvement():
    assert precision_improvement(0.7, 0.4) == pytest.approx(0.5)
    assert precision_improvement(0.3, 0.3) == 0.0
    assert precision_improvement(1.0, 0.0) == 1.0
    assert precision_improvement(1.0, 1.0) is None


@pytest.mark.parametrize("k, n", [(0, 10), (3, 10), (50, 100), (99, 100), (250, 250)])
def test_wilson_matches_reference(k, n):
    lo, hi = proportion_confint(k, n, alpha=0.05, method="wilson")
    assert wilson_interval(k, n) == pytest.approx((lo, hi), abs=1e-6)


def test_half_width_shrinks_with_attacks():
    assert pi_half_width(60, 30, 100) > pi_half_width(600, 300, 1000)


@pytest.fixture(scope="module")
def table():
    return make_dataset("correlated_normals", n=2000)


def test_identity_synthesizer_leaks(table):
    report = run_suite(table, identity_synthesizer, AttackConfig(n_attacks=300))
    assert report.retained
    assert report.max_pi() > 0.5
    assert not report.passes()


def test_shuffled_columns_leak_nothing(table):
    report = run_suite(table, column_shuffle_synthesizer(b"x"), AttackConfig(n_attacks=400))
    for c in report.columns:
        assert abs(c.pi) <= c.half_width + 0.05


def test_pi_invariant_to_relabelling():
    rng = np.random.default_rng(1)
    a = rng.choice(["p", "q", "r"], 600)
    b = np.where(rng.random(600) < 0.8, a, "q")
    t1 = make_table(["a", "b"], [Kind.TEXT, Kind.TEXT], zip(a.tolist(), b.tolist()))
    ren = {"p": "zz", "q": "yy", "r": "xx"}
    t2 = make_table(["a", "b"], [Kind.TEXT, Kind.TEXT], ((ren[x], ren[y]) for x, y in t1.rows))
    cfg = AttackConfig(n_attacks=200)
    r1 = run_suite(t1, identity_synthesizer, cfg)
    r2 = run_suite(t2, identity_synthesizer, cfg)
    assert [c.pi for c in r1.columns] == [c.pi for c in r2.columns]


def test_report_reproducible(table):
    cfg = AttackConfig(n_attacks=100, salt=b"r")
    assert run_suite(table, identity_synthesizer, cfg) == run_suite(table, identity_synthesizer, cfg)
