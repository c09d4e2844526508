"""Materialize synthetic rows from harvested buckets."""

from __future__ import annotations

import hashlib
import math
from typing import Sequence

import numpy as np

from .harvest import RefinedBucket
from .schema import ColumnMeta, EncodedColumn, Kind, Table, cast_back

SyntheticTable = Table


def seeded_rng(salt: bytes, purpose_tag: str) -> np.random.Generator:
    """PCG64 stream keyed by SHA-256 of the salt and a purpose tag."""
    digest = hashlib.sha256(salt + b"\x00rng\x00" + purpose_tag.encode()).digest()
    return np.random.Generator(np.random.PCG64(int.from_bytes(digest[:16], "little")))


def _check_kind(meta: ColumnMeta, bucket: RefinedBucket, d: int) -> None:
    r = bucket.ranges[d]
    if meta.kind in (Kind.BOOLEAN, Kind.INTEGER, Kind.TEXT) and not r.is_singularity and r.size < 1:
        # Integer-valued kinds never split below unit ranges.
        raise ValueError(f"{meta.kind.value} column {meta.name!r} got fractional range {r}")


def sample_values(buckets: Sequence[RefinedBucket], rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Uniform reals inside each bucket's ranges; returns (values, bucket index per row)."""
    if not buckets:
        dims = 0
        return np.empty((0, dims)), np.empty(0, np.int64)
    dims = len(buckets[0].ranges)
    counts = np.array([b.count for b in buckets], dtype=np.int64)
    owner = np.repeat(np.arange(len(buckets)), counts)
    out = np.empty((len(owner), dims))
    for d in range(dims):
        lo = np.array([b.ranges[d].lo for b in buckets])[owner]
        size = np.array([b.ranges[d].size for b in buckets])[owner]
        x = lo + size * rng.random(len(owner))
        # lo + size * u can round up to the excluded upper bound.
        top = np.nextafter(lo + size, -math.inf)
        out[:, d] = np.where(size > 0, np.minimum(x, top), lo)
    return out, owner


def generate(
    buckets: Sequence[RefinedBucket],
    columns: Sequence[EncodedColumn],
    rng: np.random.Generator,
    shuffle: bool = True,
) -> SyntheticTable:
    """Emit ``count`` rows per bucket, cast back to the columns' original kinds."""
    for b in buckets:
        if len(b.ranges) != len(columns):
            raise ValueError("bucket dimensionality does not match the schema")
        for d, enc in enumerate(columns):
            _check_kind(enc.meta, b, d)
    values, owner = sample_values(buckets, rng)
    rows_by_col = []
    for d, enc in enumerate(columns):
        meta, null = enc.meta, enc.null_code
        col = [
            cast_back(x, meta, buckets[i].ranges[d], rng, null)
            for x, i in zip(values[:, d].tolist(), owner.tolist())
        ]
        rows_by_col.append(col)
    rows = list(zip(*rows_by_col)) if rows_by_col else []
    if shuffle and rows:
        perm = rng.permutation(len(rows))
        rows = [rows[i] for i in perm]
    metas = [ColumnMeta(e.meta.name, e.meta.kind, tz_aware=e.meta.tz_aware) for e in columns]
    return Table(metas, rows)
