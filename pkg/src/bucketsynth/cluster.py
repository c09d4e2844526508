"""Target-anchored sub-tables for wide tables, and stitching them back together."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.metrics import normalized_mutual_info_score

from .anon import round_half_up
from .forest import Forest, build_forest
from .schema import Table, Value

DEFAULT_FEATURE_THRESHOLD = 0.01


class ClusterError(ValueError):
    pass


@dataclass(frozen=True)
class SubTableSpec:
    columns: tuple[str, ...]
    rank_window: tuple[int, int]  # [start, stop) into the feature ranking


@dataclass
class StitchPlan:
    subtables: list[SubTableSpec]
    common_column: str | None
    leftover_columns: list[str] = field(default_factory=list)

    @property
    def columns(self) -> list[str]:
        seen: dict[str, None] = {}
        for s in self.subtables:
            seen.update(dict.fromkeys(s.columns))
        seen.update(dict.fromkeys(self.leftover_columns))
        return list(seen)


def leaf_bins(forest: Forest, column: str) -> np.ndarray:
    """Row -> index of the 1-dim leaf holding it."""
    tree = forest.tree((column,))
    bins = np.zeros(len(forest.table), dtype=np.int64)
    for i, leaf in enumerate(tree.leaves()):
        bins[leaf.rows] = i
    return bins


def rank_features(table: Table, target: str, forest: Forest | None = None) -> list[tuple[str, float]]:
    """Columns ordered by normalized mutual information with the target.

    Each column is discretized by the leaves of its one-dimensional tree.
    Ties keep table order.
    """
    others = [c for c in table.names if c != target and c not in table.pid_columns]
    if not others:
        raise ClusterError("need at least one column besides the target")
    if len(set(table.column(target))) < 2:
        raise ClusterError(f"target {target!r} is constant")
    if forest is None:
        forest = build_forest(table, [(c,) for c in [target, *others]])
    y = leaf_bins(forest, target)
    scored = [(c, float(normalized_mutual_info_score(y, leaf_bins(forest, c)))) for c in others]
    return sorted(scored, key=lambda cs: -cs[1])


def read_ranking(path: str) -> list[str]:
    with open(path, encoding="utf-8") as f:
        return [line.strip() for line in f if line.strip() and not line.startswith("#")]


def plan_subtables(
    ranking: Sequence[str | tuple[str, float]],
    target: str,
    C: int = 5,
    threshold: float = DEFAULT_FEATURE_THRESHOLD,
    extra_columns: Sequence[str] = (),
) -> StitchPlan:
    """Windows of ``C - 1`` ranked features, each joined with the target.

    Scored entries below ``threshold`` become leftovers, as do
    ``extra_columns`` that are not ranked.
    """
    if C < 2:
        raise ClusterError("C must be at least 2")
    features, leftovers = [], []
    for entry in ranking:
        name, score = (entry, math.inf) if isinstance(entry, str) else entry
        if name == target:
            continue
        (features if score >= threshold else leftovers).append(name)
    ranked = set(features) | set(leftovers)
    leftovers += [c for c in extra_columns if c not in ranked and c != target]
    width = C - 1
    subtables = [
        SubTableSpec(tuple(features[i : i + width]) + (target,), (i, min(i + width, len(features))))
        for i in range(0, len(features), width)
    ]
    if not subtables:
        subtables = [SubTableSpec((target,), (0, 0))]
    return StitchPlan(subtables, target, leftovers)


def plan_descriptive(columns: Sequence[str], max_dim: int) -> StitchPlan:
    """Anchor the first column and window the rest when no target is given."""
    if len(columns) <= max_dim:
        return StitchPlan([SubTableSpec(tuple(columns), (0, len(columns)))], None)
    anchor, rest = columns[0], list(columns[1:])
    width = max_dim - 1
    subtables = [
        SubTableSpec((anchor,) + tuple(rest[i : i + width]), (i, min(i + width, len(rest))))
        for i in range(0, len(rest), width)
    ]
    return StitchPlan(subtables, anchor)


# ---------------------------------------------------------------- stitching


def resize(rows: list[tuple], n: int, rng: np.random.Generator) -> list[tuple]:
    """Randomly drop or replicate rows so exactly ``n`` remain."""
    if len(rows) == n:
        return list(rows)
    if not rows:
        raise ClusterError("cannot resize an empty table to a positive size")
    if len(rows) > n:
        keep = np.sort(rng.choice(len(rows), size=n, replace=False))
        return [rows[i] for i in keep]
    extra = rng.integers(0, len(rows), size=n - len(rows))
    return list(rows) + [rows[i] for i in extra]


def _sort_key(v: Value):
    return (v is not None, v)


def stitch(left: Table, right: Table, common: str, rng: np.random.Generator) -> Table:
    """Positional join of two syntheses after resizing, shuffling and sorting on ``common``."""
    li, ri = left.index(common), right.index(common)
    n = round_half_up((len(left) + len(right)) / 2)
    sides = []
    for t, ci in ((left, li), (right, ri)):
        rows = resize(t.rows, n, rng)
        rows = [rows[i] for i in rng.permutation(n)]
        rows.sort(key=lambda r: _sort_key(r[ci]))
        sides.append(rows)
    keep_right = [j for j in range(len(right.columns)) if j != ri]
    rows = [lrow + tuple(rrow[j] for j in keep_right) for lrow, rrow in zip(*sides)]
    return Table(left.columns + [right.columns[j] for j in keep_right], rows)


def attach_leftovers(stitched: Table, singles: Sequence[Table], rng: np.random.Generator) -> Table:
    """Append independently synthesized columns after resizing and shuffling them."""
    n = len(stitched)
    columns = list(stitched.columns)
    rows = list(stitched.rows)
    for single in singles:
        extra = resize(single.rows, n, rng)
        extra = [extra[i] for i in rng.permutation(n)]
        rows = [r + e for r, e in zip(rows, extra)]
        columns += single.columns
    return Table(columns, rows)
