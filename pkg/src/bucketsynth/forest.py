"""Snapped-range trees over column combinations.

Two builders produce identical trees:

* :func:`insert_rows` follows the row-at-a-time insertion procedure (descend
  to the deepest containing node, add a child leaf under a branch, split a
  leaf once it may branch and re-insert its rows).
* :func:`build_tree` partitions all rows top-down with numpy.

They agree because every branching condition only becomes easier to meet as
rows arrive (distinct PIDs, non-singularity, the depth/row rule) or is fixed
(subnode counts from already built lower trees).  A node is therefore a branch
exactly when its final row set allows it, whatever the insertion order.
"""

from __future__ import annotations

import gc
import itertools
import logging
import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import anon
from .anon import AnonParams, PidContributions
from .schema import EncodedColumn, Table, encode_column
from .snapping import SnappedRange

log = logging.getLogger(__name__)


class ForestError(ValueError):
    pass


@dataclass(frozen=True)
class BuildParams:
    depth_limit: int = 15
    min_branch_fraction: float = 1e-4
    subnode_min_nonsingularity: int = 15
    subnode_min_singularity: int = 5

    def __post_init__(self) -> None:
        if min(self.depth_limit, self.subnode_min_nonsingularity, self.subnode_min_singularity) <= 0:
            raise ValueError("build parameters must be positive")
        if self.min_branch_fraction <= 0:
            raise ValueError("min_branch_fraction must be positive")


class Node:
    __slots__ = (
        "ranges", "depth", "count", "n_pids", "lo", "hi", "seed",
        "suppressed", "noisy_count", "children", "subnodes", "rows",
    )

    def __init__(self, ranges: tuple[SnappedRange, ...], depth: int):
        self.ranges = ranges
        self.depth = depth
        self.count = 0
        self.n_pids = 0
        self.lo: tuple[float, ...] = ()
        self.hi: tuple[float, ...] = ()
        self.seed = 0
        self.suppressed = True
        self.noisy_count = 0
        self.children: dict[int, Node] = {}
        self.subnodes: tuple[Node | None, ...] = ()
        self.rows: np.ndarray | None = None

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def is_singularity(self) -> bool:
        return self.count > 0 and self.lo == self.hi

    def singular_dims(self) -> tuple[bool, ...]:
        return tuple(a == b for a, b in zip(self.lo, self.hi))

    def effective_ranges(self) -> tuple[SnappedRange, ...]:
        """Ranges with single-valued dimensions collapsed to singularities."""
        return tuple(
            SnappedRange.singular(a) if a == b else r for r, a, b in zip(self.ranges, self.lo, self.hi)
        )

    def walk(self) -> Iterator["Node"]:
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(node.children[k] for k in sorted(node.children, reverse=True))

    def leaf_rows(self) -> np.ndarray:
        parts = [n.rows for n in self.walk() if n.rows is not None]
        return np.sort(np.concatenate(parts)) if parts else np.empty(0, np.int64)

    def __repr__(self) -> str:
        kind = "leaf" if self.is_leaf else "branch"
        return f"Node({' x '.join(map(str, self.ranges))}, count={self.count}, {kind})"


@dataclass
class TreeContext:
    """Everything a builder needs for one column combination."""

    columns: tuple[str, ...]
    values: np.ndarray  # rows x dims, already cast and clamped
    pids: list[np.ndarray]
    pid_hashes: list[np.ndarray]
    unique_pids: bool
    anon: AnonParams
    build: BuildParams
    table_name: str
    subtrees: tuple["Tree | None", ...] = ()

    @property
    def n_rows(self) -> int:
        return len(self.values)

    @property
    def dims(self) -> int:
        return self.values.shape[1]

    @property
    def min_branch_rows(self) -> float:
        return max(1.0, self.build.min_branch_fraction * self.n_rows)

    @property
    def seeder(self) -> anon.BucketSeeder:
        seeder = self.__dict__.get("_seeder")
        if seeder is None:
            seeder = self.__dict__["_seeder"] = anon.BucketSeeder(self.anon.salt, self.table_name, self.columns)
        return seeder


@dataclass
class Tree:
    columns: tuple[str, ...]
    root: Node

    @property
    def dims(self) -> int:
        return len(self.columns)

    def nodes(self) -> Iterator[Node]:
        return self.root.walk()

    def leaves(self) -> Iterator[Node]:
        return (n for n in self.nodes() if n.is_leaf)


# ---------------------------------------------------------------- node stats


def contributions(ctx: TreeContext, rows: np.ndarray) -> PidContributions:
    if ctx.unique_pids:
        return PidContributions([np.ones(len(rows), np.int64)], [ctx.pid_hashes[0][ctx.pids[0][rows]]])
    counts, hashes = [], []
    for codes, table in zip(ctx.pids, ctx.pid_hashes):
        u, c = np.unique(codes[rows], return_counts=True)
        counts.append(c)
        hashes.append(table[u])
    return PidContributions(counts, hashes)


def bucket_seed_for(ctx: TreeContext, ranges: Sequence[SnappedRange]) -> int:
    return ctx.seeder(ranges)


def anonymize(ctx: TreeContext, rows: np.ndarray, seed: int, force_count: bool = False) -> tuple[int, bool, int]:
    """(distinct PIDs, suppress flag, noisy count) for a row set under a seed.

    The noisy count is 0 for suppressed sets unless ``force_count`` is given.
    """
    contribs = contributions(ctx, rows)
    n_pids = contribs.distinct()
    suppressed = anon.suppress_count(n_pids, seed, ctx.anon)
    noisy = 0
    if not suppressed or force_count:
        flat, top = anon.flatten(contribs, seed, ctx.anon)
        noisy = anon.noisy_count(flat, top, seed, contribs.digest(ctx.anon.salt), ctx.anon)
    return n_pids, suppressed, noisy


def _set_stats(ctx: TreeContext, node: Node, rows: np.ndarray) -> None:
    vals = ctx.values[rows]
    node.count = len(rows)
    node.lo = tuple(vals.min(axis=0).tolist())
    node.hi = tuple(vals.max(axis=0).tolist())
    node.seed = bucket_seed_for(ctx, node.ranges)
    node.n_pids, node.suppressed, node.noisy_count = anonymize(ctx, rows, node.seed)


def _subnode_ok(sn: Node | None, p: BuildParams) -> bool:
    if sn is None:
        return False
    need = p.subnode_min_singularity if sn.is_singularity else p.subnode_min_nonsingularity
    return sn.count >= need


def may_branch(ctx: TreeContext, node: Node) -> bool:
    if node.is_singularity or node.suppressed:
        return False
    if node.depth > ctx.build.depth_limit and node.count < ctx.min_branch_rows:
        return False
    return all(_subnode_ok(sn, ctx.build) for sn in node.subnodes)


def child_ranges(ranges: Sequence[SnappedRange], index: int) -> tuple[SnappedRange, ...]:
    return tuple(r.half((index >> d) & 1) for d, r in enumerate(ranges))


def child_index(ranges: Sequence[SnappedRange], point: Sequence[float]) -> int:
    return sum(1 << d for d, (r, x) in enumerate(zip(ranges, point)) if x >= r.middle)


def _project(ranges: Sequence[SnappedRange], drop: int) -> tuple[SnappedRange, ...]:
    return tuple(r for d, r in enumerate(ranges) if d != drop)


def child_subnode(sn: Node | None, ranges: tuple[SnappedRange, ...]) -> Node | None:
    """The lower-tree node matching ``ranges``, given the parent's subnode.

    A singularity leaf stands in for every descendant range that still holds
    its value; a non-singular leaf has no finer counterpart.
    """
    if sn is None:
        return None
    if sn.children:
        return sn.children.get(child_index(sn.ranges, [r.lo for r in ranges]))
    if sn.is_singularity and all(r.contains(v) for r, v in zip(ranges, sn.lo)):
        return sn
    return None


def _child_subnodes(parent: Node, ranges: tuple[SnappedRange, ...]) -> tuple[Node | None, ...]:
    return tuple(child_subnode(sn, _project(ranges, i)) for i, sn in enumerate(parent.subnodes))


def _root_subnodes(ctx: TreeContext) -> tuple[Node | None, ...]:
    if ctx.dims == 1:
        return ()
    if len(ctx.subtrees) != ctx.dims or any(t is None for t in ctx.subtrees):
        raise ForestError(f"missing lower-dimension trees for {ctx.columns}")
    return tuple(t.root for t in ctx.subtrees)


# ---------------------------------------------------------------- batch build


def build_tree(ctx: TreeContext, root_ranges: Sequence[SnappedRange]) -> Tree:
    """Build a tree one depth level at a time.

    Rows of the current frontier are kept grouped by node, so per-node
    statistics come from segment reductions instead of per-node numpy calls.
    """
    if ctx.n_rows == 0:
        raise ForestError(f"no rows to build {ctx.columns}")
    root = Node(tuple(root_ranges), 0)
    root.subnodes = _root_subnodes(ctx)
    weights = 1 << np.arange(ctx.dims, dtype=np.int64)
    p = ctx.anon
    salt = p.salt
    row_hash = ctx.pid_hashes[0][ctx.pids[0]] if ctx.unique_pids else None

    frontier = [root]
    rows = np.arange(ctx.n_rows, dtype=np.int64)
    owner = np.zeros(ctx.n_rows, dtype=np.int64)  # frontier index, non-decreasing
    while frontier:
        counts = np.bincount(owner, minlength=len(frontier))
        starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
        vals = ctx.values[rows]
        lows = np.minimum.reduceat(vals, starts, axis=0).tolist()
        highs = np.maximum.reduceat(vals, starts, axis=0).tolist()
        if row_hash is not None:
            sums = np.add.reduceat(row_hash[rows], starts).tolist()
        counts_l = counts.tolist()
        starts_l = starts.tolist()

        branching = np.zeros(len(frontier), dtype=bool)
        for i, node in enumerate(frontier):
            a = starts_l[i]
            node.count = n = counts_l[i]
            node.lo = tuple(lows[i])
            node.hi = tuple(highs[i])
            node.seed = seed = ctx.seeder(node.ranges)
            if row_hash is not None:
                node.n_pids = n
                node.suppressed = anon.suppress_count(n, seed, p)
                if not node.suppressed:
                    pid_seed = anon.combine_digests([anon.pid_sum_digest(sums[i], salt)], salt)
                    node.noisy_count = anon.noisy_count(float(n), 1.0, seed, pid_seed, p)
            else:
                node.n_pids, node.suppressed, node.noisy_count = anonymize(ctx, rows[a : a + n], seed)
            if may_branch(ctx, node):
                branching[i] = True
            else:
                node.rows = rows[a : a + n].copy()

        if not branching.any():
            break
        keep = branching[owner]
        rows, owner = rows[keep], owner[keep]
        mids = np.array([[r.middle for r in node.ranges] for node in frontier])
        key = (ctx.values[rows] >= mids[owner]) @ weights
        order = np.lexsort((key, owner))
        rows, owner, key = rows[order], owner[order], key[order]
        group = np.concatenate(([True], (owner[1:] != owner[:-1]) | (key[1:] != key[:-1])))
        first = np.flatnonzero(group)
        new_frontier = []
        for g_owner, g_key in zip(owner[first].tolist(), key[first].tolist()):
            parent = frontier[g_owner]
            ranges = child_ranges(parent.ranges, g_key)
            child = Node(ranges, parent.depth + 1)
            child.subnodes = _child_subnodes(parent, ranges)
            parent.children[g_key] = child
            new_frontier.append(child)
        owner = np.cumsum(group) - 1
        frontier = new_frontier
    return Tree(ctx.columns, root)


# ---------------------------------------------------------------- insertion build


def insert_rows(ctx: TreeContext, root_ranges: Sequence[SnappedRange], order: Iterable[int] | None = None) -> Tree:
    """Reference builder inserting one row at a time.  Quadratic; for tests."""
    root = Node(tuple(root_ranges), 0)
    root.subnodes = _root_subnodes(ctx)
    root.rows = np.empty(0, np.int64)
    for row in range(ctx.n_rows) if order is None else order:
        _insert(ctx, root, int(row))
    _finalize(ctx, root)
    return Tree(ctx.columns, root)


def _insert(ctx: TreeContext, start: Node, row: int) -> None:
    point = ctx.values[row]
    node = start
    while node.rows is None:  # branch, possibly still childless mid-split
        key = child_index(node.ranges, point)
        child = node.children.get(key)
        if child is None:
            ranges = child_ranges(node.ranges, key)
            child = Node(ranges, node.depth + 1)
            child.subnodes = _child_subnodes(node, ranges)
            child.rows = np.array([row], np.int64)
            _set_stats(ctx, child, child.rows)
            node.children[key] = child
            return
        node = child
    node.rows = np.append(node.rows, row)
    _set_stats(ctx, node, node.rows)
    if may_branch(ctx, node):
        moved, node.rows = node.rows, None
        node.children = {}
        for r in moved:
            _insert(ctx, node, int(r))


def _finalize(ctx: TreeContext, node: Node) -> np.ndarray:
    if node.is_leaf:
        rows = np.sort(node.rows)
        node.rows = rows
    else:
        rows = np.sort(np.concatenate([_finalize(ctx, node.children[k]) for k in sorted(node.children)]))
    _set_stats(ctx, node, rows)
    return rows


# ---------------------------------------------------------------- trimming


def trim_root(tree: Tree) -> Tree:
    """Promote the root's only unsuppressed child while the other is suppressed."""
    root = tree.root
    while root.children and len(root.ranges) == 1:
        low, high = root.children.get(0), root.children.get(1)
        low_gone = low is None or low.suppressed
        high_gone = high is None or high.suppressed
        if low_gone == high_gone:
            break
        root = high if low_gone else low
    return Tree(tree.columns, root)


# ---------------------------------------------------------------- forest


def closure(subsets: Iterable[Sequence[str]]) -> set[tuple[str, ...]]:
    out = set()
    for s in subsets:
        s = tuple(s)
        for k in range(1, len(s) + 1):
            out.update(itertools.combinations(s, k))
    return out


def all_combinations(columns: Sequence[str], max_dim: int | None = None) -> list[tuple[str, ...]]:
    top = len(columns) if max_dim is None else min(max_dim, len(columns))
    return [c for k in range(1, top + 1) for c in itertools.combinations(columns, k)]


@dataclass
class Forest:
    table: Table
    anon: AnonParams = field(default_factory=AnonParams)
    build: BuildParams = field(default_factory=BuildParams)
    encoded: dict[str, EncodedColumn] = field(default_factory=dict)
    trees: dict[tuple[str, ...], Tree] = field(default_factory=dict)

    def __post_init__(self) -> None:
        coded = self.table.pid_codes()
        self.pids = [codes for codes, _ in coded]
        self.pid_hashes = [anon.pid_hashes(distinct, self.anon.salt) for _, distinct in coded]
        self.unique_pids = not self.table.pid_columns

    def canonical(self, combo: Iterable[str]) -> tuple[str, ...]:
        order = {n: i for i, n in enumerate(self.table.names)}
        combo = tuple(sorted(set(combo), key=lambda n: order[n] if n in order else -1))
        for c in combo:
            if c not in order:
                raise ForestError(f"unknown column {c!r}")
        return combo

    def tree(self, combo: Iterable[str]) -> Tree:
        key = self.canonical(combo)
        try:
            return self.trees[key]
        except KeyError:
            raise ForestError(f"no tree for {key}") from None

    def context(self, combo: tuple[str, ...]) -> TreeContext:
        values = np.column_stack([self.encoded[c].values for c in combo])
        subtrees: tuple[Tree | None, ...] = ()
        if len(combo) > 1:
            subtrees = tuple(self.trees.get(tuple(c for j, c in enumerate(combo) if j != i)) for i in range(len(combo)))
        return TreeContext(
            combo, values, self.pids, self.pid_hashes, self.unique_pids,
            self.anon, self.build, self.table.name, subtrees,
        )

    def build_1dim(self, column: str) -> tuple[Tree, EncodedColumn]:
        enc = encode_column(self.table.column(column), self.table.meta(column))
        while True:
            ctx = TreeContext(
                (column,), enc.values[:, None], self.pids, self.pid_hashes, self.unique_pids,
                self.anon, self.build, self.table.name,
            )
            tree = build_tree(ctx, (enc.root,))
            trimmed = trim_root(tree)
            if trimmed.root is tree.root:
                return tree, enc
            enc = enc.clamp(trimmed.root.ranges[0])

    def build_ndim(self, combo: tuple[str, ...]) -> Tree:
        ctx = self.context(combo)
        missing = [t for t in ctx.subtrees if t is None]
        if missing:
            raise ForestError(f"missing lower-dimension trees for {combo}")
        return build_tree(ctx, tuple(self.trees[(c,)].root.ranges[0] for c in combo))

    def link_subnodes(self, tree: Tree) -> None:
        if tree.dims == 1:
            return
        ctx = self.context(tree.columns)
        tree.root.subnodes = _root_subnodes(ctx)
        stack = [tree.root]
        while stack:
            node = stack.pop()
            for child in node.children.values():
                child.subnodes = _child_subnodes(node, child.ranges)
                stack.append(child)


def _strip_links(tree: Tree) -> Tree:
    for node in tree.nodes():
        node.subnodes = ()
    return tree


_WORKER_FOREST: Forest | None = None


def _job(combo: tuple[str, ...]):
    forest = _WORKER_FOREST
    if len(combo) == 1:
        tree, enc = forest.build_1dim(combo[0])
        return _strip_links(tree), enc
    return _strip_links(forest.build_ndim(combo)), None


def default_threads() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:  # pragma: no cover
        return os.cpu_count() or 1


def build_forest(
    table: Table,
    column_subsets: Iterable[Sequence[str]],
    anon_params: AnonParams | None = None,
    build_params: BuildParams | None = None,
    threads: int = 1,
) -> Forest:
    """Build every tree in ``column_subsets`` (which must be subset-closed).

    Trees of one dimension are independent, so each level is mapped over a
    process pool; results do not depend on ``threads``.
    """
    forest = Forest(table, anon_params or AnonParams(), build_params or BuildParams())
    requested = {forest.canonical(s) for s in column_subsets}
    if not requested:
        raise ForestError("no column subsets requested")
    missing = sorted(closure(requested) - requested, key=lambda c: (len(c), c))
    if missing:
        raise ForestError("column subsets are not closed; missing " + ", ".join("+".join(m) for m in missing))
    levels: dict[int, list[tuple[str, ...]]] = {}
    for combo in requested:
        levels.setdefault(len(combo), []).append(combo)
    global _WORKER_FOREST
    for dim in sorted(levels):
        combos = sorted(levels[dim], key=lambda c: [forest.table.index(n) for n in c])
        workers = min(threads, default_threads(), len(combos))  # extra processes only add transfer cost
        if workers > 1:
            _WORKER_FOREST = forest
            # keep forked workers from copying pages the collector would touch
            gc.collect()
            gc.freeze()
            try:
                ctx = multiprocessing.get_context("fork")
                with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
                    results = list(pool.map(_job, combos))
            finally:
                _WORKER_FOREST = None
                gc.unfreeze()
        else:
            results = []
            for combo in combos:
                if dim == 1:
                    results.append(forest.build_1dim(combo[0]))
                else:
                    results.append((forest.build_ndim(combo), None))
        for combo, (tree, enc) in zip(combos, results):
            if enc is not None:
                forest.encoded[combo[0]] = enc
            forest.trees[combo] = tree
        for combo in combos:
            forest.link_subnodes(forest.trees[combo])
        log.debug("built %d trees of dimension %d", len(combos), dim)
    return forest


# ---------------------------------------------------------------- dump


def dump_tree(tree: Tree) -> Iterator[str]:
    """One line per node: depth, ranges, true count, distinct PIDs, noisy count, flags."""
    yield "# " + ",".join(tree.columns)
    for node in tree.nodes():
        ranges = " x ".join(str(r) for r in node.ranges)
        kind = "leaf" if node.is_leaf else "branch"
        flags = [kind]
        if node.is_singularity:
            flags.append("singularity")
        if node.suppressed:
            flags.append("suppressed")
        yield (
            f"{'  ' * node.depth}{ranges}\tcount={node.count}\tpids={node.n_pids}"
            f"\tnoisy={node.noisy_count}\t{' '.join(flags)}"
        )
