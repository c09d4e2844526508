"""Refine tree leaves with lower-dimensional distributions and harvest buckets."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from . import anon
from .forest import Forest, Node, Tree, TreeContext, anonymize
from .snapping import SnappedRange


class HarvestError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class RefinedBucket:
    ranges: tuple[SnappedRange, ...]
    count: int

    def __str__(self) -> str:
        return " x ".join(map(str, self.ranges)) + f"\t{self.count}"


# (range, weight) alternatives for one dimension, one halving below the node
Split = list[tuple[SnappedRange, float]]


def _split_from_children(node: Node, d: int) -> Split | None:
    weight = [0.0, 0.0]
    lows = [math.inf, math.inf]
    highs = [-math.inf, -math.inf]
    for key, child in node.children.items():
        if child.suppressed:
            continue
        h = (key >> d) & 1
        weight[h] += child.noisy_count
        lows[h] = min(lows[h], child.lo[d])
        highs[h] = max(highs[h], child.hi[d])
    total = weight[0] + weight[1]
    if total <= 0:
        return None
    out = []
    for h in (0, 1):
        if weight[h] > 0:
            r = SnappedRange.singular(lows[h]) if lows[h] == highs[h] else node.ranges[d].half(h)
            out.append((r, weight[h] / total))
    return out


def dim_split(node: Node | None, d: int, target: SnappedRange) -> Split | None:
    """How ``node``'s rows divide between the halves of ``target`` on dimension ``d``.

    Branches read the noisy counts of their unsuppressed children; leaves (and
    branches whose children are all suppressed) borrow the split from their
    lower-dimensional subnodes.  Returns None when nothing finer is known.
    """
    if node is None or node.ranges[d] != target:
        return None
    if node.children:
        split = _split_from_children(node, d)
        if split is not None:
            return split
    splits = [
        dim_split(sn, d if d < j else d - 1, target)
        for j, sn in enumerate(node.subnodes)
        if j != d
    ]
    splits = [s for s in splits if s is not None]
    if not splits:
        return None
    if len(splits) == 1:
        return splits[0]
    return _average(splits, target)


def _average(splits: Sequence[Split], target: SnappedRange) -> Split:
    halves = target.halves()
    weight = [0.0, 0.0]
    labels: list[set[SnappedRange]] = [set(), set()]
    for split in splits:
        for r, w in split:
            h = int(not halves[0].covers(r))
            weight[h] += w / len(splits)
            labels[h].add(r)
    out = []
    for h in (0, 1):
        if weight[h] > 0:
            r = labels[h].pop() if len(labels[h]) == 1 else halves[h]
            out.append((r, weight[h]))
    return out


def largest_remainder(total: int, fractions: Sequence[float]) -> list[int]:
    """Integer allocation of ``total`` proportional to ``fractions``.

    Remainders are handed out largest first; ties go to the earlier entry.
    """
    raw = [total * f for f in fractions]
    floors = [math.floor(x) for x in raw]
    left = total - sum(floors)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - floors[i]), i))
    for i in order[:left]:
        floors[i] += 1
    return floors


def refine_leaf(leaf: Node, count: int | None = None) -> list[RefinedBucket]:
    """Split a leaf's noisy count over the half-combinations of its ranges."""
    if leaf.suppressed:
        raise HarvestError(f"cannot refine suppressed node {leaf!r}")
    total = leaf.noisy_count if count is None else count
    if total <= 0:
        return []
    options: list[Split] = []
    for d, r in enumerate(leaf.ranges):
        if leaf.lo[d] == leaf.hi[d]:
            options.append([(SnappedRange.singular(leaf.lo[d]), 1.0)])
            continue
        split = dim_split(leaf, d, r) if leaf.subnodes else None
        options.append(split if split else [(r, 1.0)])
    combos = list(itertools.product(*options))
    fractions = [math.prod(w for _, w in combo) for combo in combos]
    norm = sum(fractions)
    counts = largest_remainder(total, [f / norm for f in fractions])
    return [
        RefinedBucket(tuple(r for r, _ in combo), c) for combo, c in zip(combos, counts) if c > 0
    ]


class _Harvester:
    def __init__(self, ctx: TreeContext):
        self.ctx = ctx
        self.buckets: list[RefinedBucket] = []

    def merge(self, node: Node, rows: np.ndarray, final: bool) -> bool:
        """Release rows of suppressed descendants at ``node``'s ranges if safe."""
        if node.suppressed:
            return False
        seed = anon.derive_seed(node.seed, "merged")
        _, suppressed, noisy = anonymize(self.ctx, rows, seed, force_count=final)
        if suppressed and not final:
            return False
        if noisy > 0:
            self.buckets.append(RefinedBucket(node.effective_ranges(), noisy))
        return True

    def visit(self, node: Node) -> tuple[bool, list[np.ndarray]]:
        """Harvest below ``node``; returns (anything released, unreleased row sets)."""
        if node.is_leaf:
            if node.suppressed:
                return False, [node.rows]
            self.buckets.extend(refine_leaf(node))
            return True, []
        released = False
        leftovers: list[np.ndarray] = []
        for key in sorted(node.children):
            r, left = self.visit(node.children[key])
            released |= r
            leftovers.extend(left)
        if not released:
            if node.suppressed:
                return False, leftovers
            self.buckets.extend(refine_leaf(node))
            return True, []
        if leftovers and self.merge(node, np.concatenate(leftovers), final=False):
            leftovers = []
        return True, leftovers


def harvest_tree(forest: Forest, tree: Tree) -> list[RefinedBucket]:
    h = _Harvester(forest.context(tree.columns))
    released, leftovers = h.visit(tree.root)
    if leftovers:
        h.merge(tree.root, np.concatenate(leftovers), final=True)
    return sorted(h.buckets)


def harvest(forest: Forest, dims: Sequence[str]) -> list[RefinedBucket]:
    """Buckets over ``dims`` (in the caller's order) harvested from the forest."""
    tree = forest.tree(dims)
    buckets = harvest_tree(forest, tree)
    perm = [tree.columns.index(c) for c in dims]
    if perm != list(range(len(perm))):
        buckets = sorted(RefinedBucket(tuple(b.ranges[i] for i in perm), b.count) for b in buckets)
    return buckets


def dump_buckets(buckets: Sequence[RefinedBucket]) -> Iterator[str]:
    for b in buckets:
        yield str(b)
