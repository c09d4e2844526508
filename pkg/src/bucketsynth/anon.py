"""Sticky noise, flattening, PID noise and low-count suppression for buckets.

Every random decision is a pure function of a 64-bit seed and a purpose tag.
Uniforms come from SHA-256 of ``seed || tag``; Gaussians are the inverse normal
CDF of that uniform, so results do not depend on platform RNGs.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
from statistics import NormalDist
from typing import Any, Mapping, Sequence

import numpy as np

from .snapping import SnappedRange

_STD_NORMAL = NormalDist()
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class AnonParams:
    salt: bytes = b""
    base_noise_sd: float = 1.0
    supp_mean: float = 5.0
    supp_sd: float = 1.0
    supp_floor: int = 3
    top_group_bounds: tuple[int, int] = (3, 5)
    flatten_bounds: tuple[int, int] = (1, 2)

    def __post_init__(self) -> None:
        if self.supp_floor < 2:
            raise ValueError("supp_floor must be at least 2")
        for lo, hi in (self.top_group_bounds, self.flatten_bounds):
            if lo > hi or lo < 0:
                raise ValueError(f"empty bounds ({lo}, {hi})")


def _digest64(data: bytes) -> int:
    return int.from_bytes(hashlib.sha256(data).digest()[:8], "little")


class BucketSeeder:
    """Seeds for many buckets sharing salt, table and columns."""

    def __init__(self, salt: bytes, table_name: str, columns: Sequence[str]):
        h = hashlib.sha256()
        for part in (salt, table_name.encode()):
            h.update(struct.pack("<Q", len(part)))
            h.update(part)
        h.update(struct.pack("<Q", len(columns)))
        for c in columns:
            b = c.encode()
            h.update(struct.pack("<Q", len(b)))
            h.update(b)
        self._prefix = h

    def __call__(self, ranges: Sequence[SnappedRange]) -> int:
        h = self._prefix.copy()
        h.update(struct.pack(f"<{2 * len(ranges)}d", *(x for r in ranges for x in (r.lo, r.size))))
        return int.from_bytes(h.digest()[:8], "little")


def bucket_seed(salt: bytes, table_name: str, columns: Sequence[str], ranges: Sequence[SnappedRange]) -> int:
    """Seed identifying a bucket by table, columns and snapped ranges."""
    return BucketSeeder(salt, table_name, columns)(ranges)


def derive_seed(seed: int, tag: str) -> int:
    """An independent seed for a secondary decision about the same bucket."""
    return _digest64(struct.pack("<Q", seed & _MASK64) + b"\x00derive\x00" + tag.encode())


def sticky_uniform(seed: int, tag: str) -> float:
    """Uniform in the open interval (0, 1) derived from ``seed`` and ``tag``."""
    bits = _digest64(struct.pack("<Q", seed & _MASK64) + tag.encode())
    return ((bits >> 11) + 0.5) / 2**53


def sticky_gaussian(seed: int, tag: str, mean: float = 0.0, sd: float = 1.0) -> float:
    return mean + sd * _STD_NORMAL.inv_cdf(sticky_uniform(seed, tag))


def round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def sticky_int(seed: int, tag: str, bounds: tuple[int, int]) -> int:
    """Gaussian centred on the bounds' midpoint, rounded and clamped into them."""
    lo, hi = bounds
    if lo == hi:
        return lo
    x = sticky_gaussian(seed, tag, (lo + hi) / 2, (hi - lo) / 2)
    return min(hi, max(lo, round_half_up(x)))


# ---------------------------------------------------------------- PIDs


def pid_hash(pid: Any, salt: bytes = b"") -> int:
    return _digest64(salt + b"\x00pid\x00" + repr(pid).encode())


def pid_hashes(pids: Sequence[Any], salt: bytes = b"") -> np.ndarray:
    return np.fromiter((pid_hash(p, salt) for p in pids), np.uint64, len(pids))


def pid_sum(hashes: np.ndarray | Sequence[int]) -> int:
    """Wrapping 64-bit sum of PID hashes; additive over disjoint PID sets."""
    return int(np.sum(np.asarray(hashes, dtype=np.uint64), dtype=np.uint64))


def pid_digest(distinct_hashes: np.ndarray | Sequence[int], salt: bytes = b"") -> int:
    """Order-free digest of a set of PID hashes."""
    return pid_sum_digest(pid_sum(distinct_hashes), salt)


def pid_sum_digest(total: int, salt: bytes = b"") -> int:
    return _digest64(salt + b"\x00pidset\x00" + struct.pack("<Q", total & _MASK64))


def combine_digests(digests: Sequence[int], salt: bytes = b"") -> int:
    h = hashlib.sha256(salt)
    for d in digests:
        h.update(struct.pack("<Q", d))
    return int.from_bytes(h.digest()[:8], "little")


@dataclass
class PidContributions:
    """Per PE type: row counts of each distinct PID and that PID's hash."""

    counts: list[np.ndarray]
    hashes: list[np.ndarray]

    @classmethod
    def from_mappings(cls, mappings: Mapping[Any, int] | Sequence[Mapping[Any, int]], salt: bytes = b"") -> "PidContributions":
        if isinstance(mappings, Mapping):
            mappings = [mappings]
        counts, hashes = [], []
        for m in mappings:
            keys = list(m)
            counts.append(np.array([m[k] for k in keys], dtype=np.int64))
            hashes.append(pid_hashes(keys, salt))
        return cls(counts, hashes)

    @property
    def total(self) -> int:
        return int(self.counts[0].sum()) if self.counts else 0

    def distinct(self) -> int:
        """Smallest distinct-PID count across PE types."""
        return min((len(c) for c in self.counts), default=0)

    def digest(self, salt: bytes = b"") -> int:
        return combine_digests([pid_digest(hs, salt) for hs in self.hashes], salt)


# ---------------------------------------------------------------- mechanisms


def _flatten_one(counts: np.ndarray, hashes: np.ndarray, n_extreme: int, n_top: int) -> tuple[float, float]:
    total = float(counts.sum())
    if len(counts) == 0:
        return 0.0, 0.0
    if counts.max() == counts.min():
        return total, float(counts[0])
    # Descending by count, ties broken by PID hash.
    order = np.lexsort((hashes, -counts))
    ranked = counts[order]
    extremes = ranked[:n_extreme]
    rest = ranked[n_extreme : n_extreme + n_top]
    if len(rest) == 0:
        return total, float(extremes.mean())
    top_mean = float(rest.mean())
    excess = float(np.clip(extremes - top_mean, 0.0, None).sum())
    return total - excess, top_mean


def flatten(contribs: PidContributions, seed: int, p: AnonParams) -> tuple[float, float]:
    """Flattened row total and the mean of the top-contributor group.

    With several PE types the most-flattened total and the largest group mean
    are used, so the noise covers every entity type.
    """
    if all(len(c) and c.max() == c.min() for c in contribs.counts):
        # Equal contributions: nothing to flatten, so skip the draws.
        return float(contribs.counts[0].sum()), float(max(c[0] for c in contribs.counts))
    n_extreme = sticky_int(seed, "flatten_extreme", p.flatten_bounds)
    n_top = sticky_int(seed, "flatten_top", p.top_group_bounds)
    results = [_flatten_one(c, h, n_extreme, n_top) for c, h in zip(contribs.counts, contribs.hashes)]
    return min(r[0] for r in results), max(r[1] for r in results)


def noise_sd(top_group_mean: float, p: AnonParams) -> float:
    return p.base_noise_sd * max(1.0, top_group_mean)


def noise_layers(top_group_mean: float, seed: int, pid_seed: int, p: AnonParams) -> tuple[float, float]:
    """The bucket-seeded and PID-seeded Gaussian noise values."""
    sd = noise_sd(top_group_mean, p)
    return sticky_gaussian(seed, "noise", 0.0, sd), sticky_gaussian(pid_seed, "pid_noise", 0.0, sd)


def noisy_count(flattened_total: float, top_group_mean: float, seed: int, pid_seed: int, p: AnonParams) -> int:
    g1, g2 = noise_layers(top_group_mean, seed, pid_seed, p)
    return max(0, round_half_up(flattened_total + g1 + g2))


def suppress_threshold(seed: int, p: AnonParams) -> int:
    return max(p.supp_floor, round_half_up(sticky_gaussian(seed, "suppress", p.supp_mean, p.supp_sd)))


# inv_cdf of the extreme representable uniforms stays within +-8.3 sd.
_MAX_Z = 8.3


def suppress_count(distinct: int, seed: int, p: AnonParams) -> bool:
    if distinct <= 1:
        return True
    if distinct < p.supp_floor:
        return True
    if distinct > p.supp_mean + _MAX_Z * p.supp_sd + 1:
        return False
    return distinct < suppress_threshold(seed, p)


def suppress(contribs: PidContributions, seed: int, p: AnonParams) -> bool:
    return suppress_count(contribs.distinct(), seed, p)
