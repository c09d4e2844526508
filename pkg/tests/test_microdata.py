import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bucketsynth.harvest import RefinedBucket
from bucketsynth.microdata import generate, sample_values, seeded_rng
from bucketsynth.schema import ColumnMeta, EncodedColumn, Kind, encode_column
from bucketsynth.snapping import SnappedRange


def enc(kind, values, name="x"):
    m = ColumnMeta(name, kind)
    m.build_casting(values)
    return encode_column(values, m)


def test_singularity_bucket_repeats_value():
    col = enc(Kind.INTEGER, [7, 8])
    out = generate([RefinedBucket((SnappedRange.singular(7.0),), 3)], [col], seeded_rng(b"", "m"))
    assert out.rows == [(7,), (7,), (7,)]


def test_incompatible_range_is_rejected():
    col = enc(Kind.BOOLEAN, [True, False])
    with pytest.raises(ValueError):
        generate([RefinedBucket((SnappedRange(0.0, 0.5),), 3)], [col], seeded_rng(b"", "m"))
    with pytest.raises(ValueError):
        generate([RefinedBucket((SnappedRange(0.0, 2.0), SnappedRange(0.0, 2.0)), 3)], [col], seeded_rng(b"", "m"))


def test_non_singular_boolean_range_yields_both_values():
    col = enc(Kind.BOOLEAN, [True, False])
    out = generate([RefinedBucket((SnappedRange(0.0, 2.0),), 200)], [col], seeded_rng(b"", "m"))
    assert {r[0] for r in out.rows} == {True, False}


def test_uniform_within_range():
    n = 10_000
    values, owner = sample_values([RefinedBucket((SnappedRange(0.0, 64.0),), n)], seeded_rng(b"", "u"))
    low = int((values[:, 0] < 32).sum())
    # binomial(n, 1/2): sd = sqrt(n) / 2
    assert abs(low - n / 2) < 3 * np.sqrt(n) / 2
    assert (owner == 0).all()


@given(
    st.lists(
        st.tuples(st.integers(-20, 20), st.integers(-3, 4), st.integers(1, 20)),
        min_size=1,
        max_size=8,
    )
)
def test_values_stay_in_their_buckets(specs):
    buckets = []
    for k, e, c in specs:
        size = 2.0**e
        buckets.append(RefinedBucket((SnappedRange(k * size, size),), c))
    values, owner = sample_values(buckets, seeded_rng(b"", "p"))
    assert len(values) == sum(b.count for b in buckets)
    for x, i in zip(values[:, 0], owner):
        assert buckets[i].ranges[0].contains(x)


def test_nulls_come_from_the_null_code():
    col = enc(Kind.REAL, [1.0, 2.0, None])
    code = col.null_code
    out = generate([RefinedBucket((SnappedRange.singular(code),), 4)], [col], seeded_rng(b"", "n"))
    assert out.rows == [(None,)] * 4


def test_row_count_and_columns():
    a, b = enc(Kind.REAL, [0.0, 10.0], "a"), enc(Kind.TEXT, ["p", "q"], "b")
    buckets = [
        RefinedBucket((SnappedRange(0.0, 8.0), SnappedRange.singular(0.0)), 5),
        RefinedBucket((SnappedRange(8.0, 8.0), SnappedRange.singular(1.0)), 6),
    ]
    out = generate(buckets, [a, b], seeded_rng(b"", "c"))
    assert out.names == ["a", "b"] and len(out) == 11
    assert sorted(r[1] for r in out.rows) == ["p"] * 5 + ["q"] * 6
    for x, s in out.rows:
        assert (0 <= x < 8) if s == "p" else (8 <= x < 16)


def test_seeded_streams():
    a = seeded_rng(b"salt", "microdata").random(5)
    assert np.array_equal(a, seeded_rng(b"salt", "microdata").random(5))
    assert not np.array_equal(a, seeded_rng(b"pepper", "microdata").random(5))
    assert not np.array_equal(a, seeded_rng(b"salt", "noise").random(5))


def test_shuffle_is_deterministic():
    col = enc(Kind.INTEGER, list(range(10)))
    buckets = [RefinedBucket((SnappedRange.singular(float(i)),), 3) for i in range(10)]
    one = generate(buckets, [col], seeded_rng(b"", "s"))
    two = generate(buckets, [col], seeded_rng(b"", "s"))
    assert one.rows == two.rows
    assert one.rows != sorted(one.rows)
