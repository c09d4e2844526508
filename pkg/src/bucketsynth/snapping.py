"""Power-of-two snapped ranges.

A snapped range is a half-open interval ``[lo, lo + size)`` whose size is a
power of two and whose offset is a multiple of that size, or a singularity
holding exactly one value (``size == 0``).
"""

from __future__ import annotations

import math
from typing import NamedTuple


class SnappingError(ValueError):
    pass


class SnappedRange(NamedTuple):
    lo: float
    size: float  # 0.0 marks a singularity at ``lo``

    @classmethod
    def singular(cls, value: float) -> "SnappedRange":
        return cls(float(value), 0.0)

    @property
    def is_singularity(self) -> bool:
        return self.size == 0.0

    @property
    def hi(self) -> float:
        return self.lo + self.size

    @property
    def middle(self) -> float:
        return self.lo + self.size / 2

    @property
    def value(self) -> float:
        if not self.is_singularity:
            raise SnappingError("not a singularity")
        return self.lo

    def contains(self, x: float) -> bool:
        if self.is_singularity:
            return x == self.lo
        return self.lo <= x < self.lo + self.size

    def covers(self, other: "SnappedRange") -> bool:
        if other.is_singularity:
            return self.contains(other.lo)
        return self.lo <= other.lo and other.hi <= self.hi

    def half(self, upper: int) -> "SnappedRange":
        s = self.size / 2
        return SnappedRange(self.lo + s if upper else self.lo, s)

    def halves(self) -> tuple["SnappedRange", "SnappedRange"]:
        return halves(self)

    def __str__(self) -> str:
        if self.is_singularity:
            return f"{{{_fmt(self.lo)}}}"
        return f"[{_fmt(self.lo)}, {_fmt(self.hi)})"


def _fmt(x: float) -> str:
    return repr(int(x)) if float(x).is_integer() and abs(x) < 2**53 else repr(x)


def is_snapped(r: SnappedRange) -> bool:
    """True when ``r`` is a singularity or a properly aligned power-of-two range."""
    if r.is_singularity:
        return math.isfinite(r.lo)
    mantissa, _ = math.frexp(r.size)
    if r.size <= 0 or mantissa != 0.5:
        return False
    # Roots that straddle zero are shifted by half their size.
    return (r.lo / r.size).is_integer() or (r.lo == -r.size / 2)


def _pow2_at_least(x: float) -> float:
    """Smallest power of two >= x (x > 0)."""
    mantissa, exp = math.frexp(x)
    return math.ldexp(1.0, exp - 1) if mantissa == 0.5 else math.ldexp(1.0, exp)


def snap_covering(min_v: float, max_v: float) -> SnappedRange:
    """Smallest snapped range containing both ``min_v`` and ``max_v``.

    A degenerate pair (``min_v == max_v``) yields the size-1 range at
    ``floor(value)``.  Intervals straddling zero cannot be covered by a
    zero-aligned range, so they get the centred range ``[-s/2, s/2)``.
    """
    if not (math.isfinite(min_v) and math.isfinite(max_v)):
        raise SnappingError(f"non-finite bounds: {min_v!r}, {max_v!r}")
    if min_v > max_v:
        raise SnappingError(f"min {min_v!r} exceeds max {max_v!r}")
    if min_v == max_v:
        return SnappedRange(float(math.floor(min_v)), 1.0)

    if min_v < 0.0 <= max_v:
        size = _pow2_at_least(2.0 * max(-min_v, max_v))
        if max_v >= size / 2:
            size *= 2
        return SnappedRange(-size / 2, size)

    size = _pow2_at_least(max_v - min_v)
    while True:
        lo = math.floor(min_v / size) * size
        if max_v < lo + size:
            return SnappedRange(float(lo), size)
        size *= 2


def halves(r: SnappedRange) -> tuple[SnappedRange, SnappedRange]:
    if r.is_singularity:
        raise SnappingError("cannot halve a singularity")
    return r.half(0), r.half(1)


def null_code_for_column(data_root: SnappedRange | None) -> tuple[float, SnappedRange]:
    """Place the null code just past ``data_root`` and return the widened root.

    With no non-null data the null code is 0 and the root is ``[0, 1)``.
    """
    if data_root is None:
        return 0.0, SnappedRange(0.0, 1.0)
    if data_root.is_singularity:
        raise SnappingError("data root must not be a singularity")
    code = data_root.lo + data_root.size
    return code, snap_covering(data_root.lo, code)


def nesting_chain(root: SnappedRange, x: float, min_size: float) -> list[SnappedRange]:
    """All snapped ranges inside ``root`` containing ``x``, largest first."""
    if not root.contains(x):
        raise SnappingError(f"{x!r} outside {root}")
    chain = [root]
    r = root
    while r.size / 2 >= min_size:
        r = r.half(int(x >= r.middle))
        chain.append(r)
    return chain
