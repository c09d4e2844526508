"""End-to-end synthesis: forest, harvest, microdata and stitching."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

from .anon import AnonParams
from .cluster import (
    DEFAULT_FEATURE_THRESHOLD,
    StitchPlan,
    attach_leftovers,
    plan_descriptive,
    plan_subtables,
    rank_features,
    stitch,
)
from .forest import BuildParams, Forest, build_forest, closure, default_threads
from .harvest import harvest
from .microdata import generate, seeded_rng
from .schema import ColumnMeta, Kind, SchemaError, Table

DEFAULT_MAX_DIM = 3


@dataclass
class SynthesisResult:
    table: Table
    plan: StitchPlan
    forest: Forest
    bucket_counts: dict[tuple[str, ...], int] = field(default_factory=dict)

    def summary(self) -> dict[str, int]:
        nodes = [n for t in self.forest.trees.values() for n in t.nodes()]
        return {
            "trees": len(self.forest.trees),
            "nodes": len(nodes),
            "suppressed_nodes": sum(n.suppressed for n in nodes),
            "buckets": sum(self.bucket_counts.values()),
            "rows": len(self.table),
        }


def _check_columns(table: Table, columns: Sequence[str] | None, target: str | None) -> list[str]:
    if columns is None:
        columns = [c for c in table.names if c not in table.pid_columns]
    columns = list(dict.fromkeys(columns))
    missing = [c for c in columns if c not in table.names]
    if missing:
        raise SchemaError(f"unknown columns: {missing}")
    pid_overlap = [c for c in columns if c in table.pid_columns]
    if pid_overlap:
        raise SchemaError(f"PID columns cannot be synthesized: {pid_overlap}")
    if target is not None and target not in columns:
        raise SchemaError(f"target {target!r} is not among the columns to synthesize")
    if not columns:
        raise SchemaError("no columns to synthesize")
    if len(table) == 0:
        raise SchemaError("input table is empty")
    return columns


def make_plan(
    table: Table,
    columns: Sequence[str],
    target: str | None,
    max_dim: int = DEFAULT_MAX_DIM,
    ranking: Sequence[str] | None = None,
    C: int = 5,
    threshold: float = DEFAULT_FEATURE_THRESHOLD,
    anon: AnonParams | None = None,
    build: BuildParams | None = None,
) -> StitchPlan:
    if target is None:
        return plan_descriptive(columns, max_dim)
    if ranking is None:
        scope = table.select(list(columns) + list(table.pid_columns))
        ranked: Sequence = rank_features(
            scope, target, build_forest(scope, [(c,) for c in columns], anon, build, threads=1)
        )
    else:
        unknown = [c for c in ranking if c not in columns]
        if unknown:
            raise SchemaError(f"ranking names unknown columns: {unknown}")
        ranked = list(ranking)
    return plan_subtables(ranked, target, C, threshold, extra_columns=columns)


def synthesize(
    table: Table,
    columns: Sequence[str] | None = None,
    target: str | None = None,
    anon: AnonParams | None = None,
    build: BuildParams | None = None,
    max_dim: int = DEFAULT_MAX_DIM,
    threads: int | None = None,
    ranking: Sequence[str] | None = None,
    C: int = 5,
    threshold: float = DEFAULT_FEATURE_THRESHOLD,
    emit_pid: bool = False,
) -> SynthesisResult:
    """Synthesize ``columns`` of ``table``.

    Without a target, up to ``max_dim`` columns are synthesized jointly; wider
    requests are split into windows sharing the first column. With a target,
    ranked features are grouped into target-anchored sub-tables of at most
    ``C`` columns and unselected columns are synthesized one by one.
    """
    anon = anon or AnonParams()
    if max_dim < 2:
        raise ValueError("max_dim must be at least 2")
    columns = _check_columns(table, columns, target)
    plan = make_plan(table, columns, target, max_dim, ranking, C, threshold, anon, build)

    subsets = [s.columns for s in plan.subtables] + [(c,) for c in columns]
    scope = table.select(columns + list(table.pid_columns))
    threads = default_threads() if threads is None else threads
    forest = build_forest(scope, sorted(closure(subsets)), anon, build, threads)

    def synth(cols: Sequence[str]) -> Table:
        buckets = harvest(forest, cols)
        result.bucket_counts[tuple(cols)] = len(buckets)
        rng = seeded_rng(anon.salt, "microdata:" + "\x1f".join(cols))
        return generate(buckets, [forest.encoded[c] for c in cols], rng)

    result = SynthesisResult(Table([], []), plan, forest)
    parts = [synth(s.columns) for s in plan.subtables]
    stitch_rng = seeded_rng(anon.salt, "stitch")
    out = parts[0]
    for part in parts[1:]:
        out = stitch(out, part, plan.common_column, stitch_rng)
    if plan.leftover_columns:
        out = attach_leftovers(out, [synth([c]) for c in plan.leftover_columns], stitch_rng)
    if len(parts) > 1:
        # Stitching leaves rows sorted on the common column.
        out = out.take(stitch_rng.permutation(len(out)).tolist())
    out = out.select(columns)
    if emit_pid:
        out = Table(
            [ColumnMeta("pid", Kind.INTEGER, pid_role=True)] + out.columns,
            [(i,) + r for i, r in enumerate(out.rows)],
        )
    result.table = out
    return result


def make_synthesizer(**kwargs) -> Callable[[Table], Table]:
    """A table-to-table function with fixed synthesis settings."""

    def run(table: Table) -> Table:
        return synthesize(table, **kwargs).table

    return run
