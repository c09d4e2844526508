import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import bucketsynth.forest as forest_mod
from bucketsynth.anon import AnonParams
from bucketsynth.forest import (
    BuildParams,
    ForestError,
    all_combinations,
    anonymize,
    build_forest,
    closure,
    dump_tree,
    insert_rows,
    may_branch,
)
from bucketsynth.schema import Kind, make_table

from conftest import correlated_table


def signature(tree):
    return [
        (n.ranges, n.depth, n.count, n.n_pids, n.lo, n.hi, n.seed, n.suppressed, n.noisy_count,
         n.is_leaf, None if n.rows is None else n.rows.tolist())
        for n in tree.nodes()
    ]


def random_table(seed, n, n_pids, spread):
    rng = np.random.default_rng(seed)
    pid = rng.integers(0, n_pids, n)
    x = np.round(rng.normal(0, spread, n), 1)
    y = rng.integers(0, 6, n) + (x > 0)
    return make_table(["pid", "x", "y"], [Kind.INTEGER, Kind.REAL, Kind.INTEGER],
                      zip(pid.tolist(), x.tolist(), y.tolist()), pid_columns=["pid"])


@given(st.integers(0, 10**6), st.integers(20, 400), st.integers(3, 200), st.sampled_from([0.5, 5.0, 50.0]))
def test_batch_builder_matches_insertion(seed, n, n_pids, spread):
    table = random_table(seed, n, n_pids, spread)
    forest = build_forest(table, all_combinations(["x", "y"]), AnonParams(salt=b"s"))
    order = np.random.default_rng(seed + 1).permutation(n)
    for combo in [("x",), ("y",), ("x", "y")]:
        tree = forest.trees[combo]
        ref = insert_rows(forest.context(combo), tree.root.ranges, order=order)
        assert signature(ref) == signature(tree)


def test_insertion_order_does_not_matter(small_table):
    forest = build_forest(small_table, all_combinations(["a", "b"]))
    ctx = forest.context(("a", "b"))
    roots = forest.trees[("a", "b")].root.ranges
    a = insert_rows(ctx, roots, order=range(len(small_table)))
    b = insert_rows(ctx, roots, order=range(len(small_table) - 1, -1, -1))
    assert signature(a) == signature(b)


@pytest.fixture(scope="module")
def forest():
    table = correlated_table(3000, seed=11, pid_per=2)
    return build_forest(table, all_combinations(["a", "b"]), AnonParams(salt=b"f"))


def test_structure_invariants(forest):
    for combo, tree in forest.trees.items():
        ctx = forest.context(combo)
        for node in tree.nodes():
            assert all(r.contains(lo) for r, lo in zip(node.ranges, node.lo))
            assert all(r.lo <= hi < r.hi for r, hi in zip(node.ranges, node.hi))
            if node.is_leaf:
                assert not may_branch(ctx, node)
                assert node.count == len(node.rows)
            else:
                assert may_branch(ctx, node)
                assert node.count == sum(c.count for c in node.children.values())
                for c in node.children.values():
                    assert all(p.covers(r) and r.size == p.size / 2 for p, r in zip(node.ranges, c.ranges))
                    assert c.depth == node.depth + 1


def test_stats_match_recomputation(forest):
    tree = forest.trees[("a", "b")]
    ctx = forest.context(("a", "b"))
    for node in tree.nodes():
        assert (node.n_pids, node.suppressed, node.noisy_count) == anonymize(ctx, node.leaf_rows(), node.seed)
        if node.suppressed:
            assert node.noisy_count == 0


def test_subnodes_match_projections(forest):
    tree = forest.trees[("a", "b")]
    for node in tree.nodes():
        assert len(node.subnodes) == 2
        for drop, sn in enumerate(node.subnodes):
            if sn is None:
                continue
            (proj,) = [r for d, r in enumerate(node.ranges) if d != drop]
            if sn.ranges[0] != proj:
                assert sn.is_leaf and sn.is_singularity and proj.contains(sn.lo[0])


def test_branching_needs_substantial_subnodes(forest):
    p = BuildParams()
    for node in forest.trees[("a", "b")].nodes():
        if node.children:
            for sn in node.subnodes:
                need = p.subnode_min_singularity if sn.is_singularity else p.subnode_min_nonsingularity
                assert sn.count >= need


def test_one_dim_roots_are_trimmed(forest):
    for c in ("a", "b"):
        root = forest.trees[(c,)].root
        kids = root.children
        if kids:
            alive = [k for k in (0, 1) if k in kids and not kids[k].suppressed]
            assert len(alive) != 1
        assert forest.encoded[c].root == root.ranges[0]


def test_rows_partition_the_table(forest):
    for tree in forest.trees.values():
        rows = np.concatenate([leaf.rows for leaf in tree.leaves()])
        assert sorted(rows.tolist()) == list(range(len(forest.table)))


def test_singleton_column_is_one_node():
    t = make_table(["x"], [Kind.INTEGER], [(7,)] * 100)
    f = build_forest(t, [("x",)])
    assert len(f.trees) == 1
    nodes = list(f.trees[("x",)].nodes())
    assert len(nodes) == 1 and nodes[0].is_singularity


def test_depth_limit_stops_small_nodes():
    t = correlated_table(500, seed=2)
    f = build_forest(t, [("a",)], build_params=BuildParams(depth_limit=2, min_branch_fraction=0.5))
    assert max(n.depth for n in f.trees[("a",)].nodes()) <= 3


def test_closure_is_required(small_table):
    with pytest.raises(ForestError, match="missing a"):
        build_forest(small_table, [("a", "b"), ("b",)])
    assert closure([("a", "b")]) == {("a",), ("b",), ("a", "b")}


def test_parallel_build_is_identical(small_table, monkeypatch):
    # pretend there are spare CPUs so the process pool runs even on one core
    monkeypatch.setattr(forest_mod, "default_threads", lambda: 3)
    combos = all_combinations(["a", "b"])
    serial = build_forest(small_table, combos, threads=1)
    parallel = build_forest(small_table, combos, threads=3)
    for combo in combos:
        assert list(dump_tree(serial.trees[combo])) == list(dump_tree(parallel.trees[combo]))
        assert signature(serial.trees[combo]) == signature(parallel.trees[combo])
    # subnode links are rebuilt after the worker round trip
    assert parallel.trees[("a", "b")].root.subnodes[0] is parallel.trees[("b",)].root


def test_dump_is_stable_and_counts_agree(small_table):
    f1 = build_forest(small_table, all_combinations(["a", "b"]))
    f2 = build_forest(small_table, all_combinations(["a", "b"]))
    d1 = [line for t in f1.trees.values() for line in dump_tree(t)]
    assert d1 == [line for t in f2.trees.values() for line in dump_tree(t)]
    suppressed = sum(n.suppressed for t in f1.trees.values() for n in t.nodes())
    assert sum("suppressed" in line for line in d1) == suppressed


def test_salt_changes_noise_not_rows(small_table):
    a = build_forest(small_table, [("a",)], AnonParams(salt=b"1")).trees[("a",)]
    b = build_forest(small_table, [("a",)], AnonParams(salt=b"2")).trees[("a",)]
    assert a.root.count == b.root.count
    assert [n.seed for n in a.nodes()][0] != [n.seed for n in b.nodes()][0]
