"""Command-line front end: synthesize, quality, privacy and inspect."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import fields
from typing import Sequence

from .anon import AnonParams
from .cluster import ClusterError, read_ranking
from .forest import BuildParams, ForestError, all_combinations, build_forest, dump_tree
from .metrics import MetricError, medians, quality_report
from .privacy import AttackConfig, PrivacyError, identity_synthesizer, run_suite
from .schema import (
    CastingError,
    EmptyTableError,
    SchemaError,
    Table,
    format_value,
    read_csv,
    read_csv_as,
    write_csv,
)
from .synthesizer import DEFAULT_MAX_DIM, make_synthesizer, synthesize

log = logging.getLogger("bucketsynth")

EXIT_OK = 0
EXIT_FAILURE = 1  # evaluation ran but failed its policy line
EXIT_USAGE = 2
EXIT_INPUT = 3  # input file missing or unreadable
EXIT_SCHEMA = 4  # unknown or invalid columns
EXIT_EMPTY = 5
EXIT_OUTPUT = 6  # output not writable
EXIT_ANALYSIS = 7  # synthesis or evaluation could not proceed


class UsageError(Exception):
    pass


class OutputError(Exception):
    pass


ANON_KEYS = {f.name for f in fields(AnonParams)} - {"salt", "top_group_bounds", "flatten_bounds"}
BUILD_KEYS = {f.name for f in fields(BuildParams)}


def read_config(path: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment. Keys may use dashes or underscores."""
    out = {}
    try:
        with open(path, encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e}") from None
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _split(s: str | None) -> list[str] | None:
    if s is None:
        return None
    return [c.strip() for c in s.split(",") if c.strip()]


def _param_type(key: str) -> type:
    owner = AnonParams if key in ANON_KEYS else BuildParams
    return type(getattr(owner, key))


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value file; command-line flags take precedence")
    p.add_argument("--salt", help="secret salt for noise and sampling")
    p.add_argument("--threads", type=int, help="worker processes (default: available cores)")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_input(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", "-i", help="input CSV with a header row")
    p.add_argument("--pid-col", action="append", dest="pid_col", help="protected-entity column (repeatable)")
    p.add_argument("--columns", help="comma-separated columns to use (default: all non-PID columns)")


def _add_params(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("anonymization and tree parameters")
    for key in sorted(ANON_KEYS | BUILD_KEYS):
        g.add_argument("--" + key.replace("_", "-"), dest=key, type=_param_type(key))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bucketsynth", description="Anonymous synthetic tables from noisy bucket trees.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="write a synthetic version of a table")
    _add_input(p)
    _add_common(p)
    _add_params(p)
    p.add_argument("--output", "-o", help="output CSV")
    p.add_argument("--target", help="ML target column; enables sub-table planning")
    p.add_argument("--max-dim", type=int, dest="max_dim", help=f"widest joint synthesis without a target (default {DEFAULT_MAX_DIM})")
    p.add_argument("--ranking-file", dest="ranking_file", help="feature ranking, one column per line")
    p.add_argument("--cluster-size", type=int, dest="cluster_size", help="columns per target sub-table (default 5)")
    p.add_argument("--feature-threshold", type=float, dest="feature_threshold")
    p.add_argument("--emit-pid", action="store_true", default=None, dest="emit_pid", help="add a meaningless sequential pid column")

    p = sub.add_parser("quality", help="score a synthetic table against its original")
    p.add_argument("--original", required=True)
    p.add_argument("--synthetic", required=True)
    p.add_argument("--columns")
    p.add_argument("--pid-col", action="append", dest="pid_col")
    p.add_argument("--output", "-o", help="report CSV")

    p = sub.add_parser("privacy", help="run the inference-attack evaluation")
    _add_input(p)
    _add_common(p)
    _add_params(p)
    p.add_argument("--output", "-o", help="report CSV")
    p.add_argument("--n-attacks", type=int, dest="n_attacks")
    p.add_argument("--confidence-cut", type=float, dest="confidence_cut")
    p.add_argument("--match-tolerance", type=float, dest="match_tolerance")
    p.add_argument("--max-dim", type=int, dest="max_dim")
    p.add_argument("--no-anon", action="store_true", default=None, dest="no_anon",
                   help="attack the raw test set instead (calibration only)")

    p = sub.add_parser("inspect", help="build the forest and dump its nodes")
    _add_input(p)
    _add_common(p)
    _add_params(p)
    p.add_argument("--max-dim", type=int, dest="max_dim")
    p.add_argument("--output", "-o", help="dump file (default: stdout)")
    return parser


def _merge_config(args: argparse.Namespace) -> argparse.Namespace:
    if not getattr(args, "config", None):
        return args
    for key, value in read_config(args.config).items():
        if not hasattr(args, key):
            raise UsageError(f"unknown config key {key!r}")
        if getattr(args, key) is None:
            setattr(args, key, value)
    return args


def _coerce(value, kind):
    if value is None or isinstance(value, kind):
        return value
    if kind is bool:
        return str(value).lower() in ("1", "true", "yes", "on")
    try:
        return kind(value)
    except ValueError:
        raise UsageError(f"bad value {value!r}") from None


def _params(args) -> tuple[AnonParams, BuildParams]:
    a = {k: _coerce(getattr(args, k), _param_type(k)) for k in ANON_KEYS if getattr(args, k, None) is not None}
    b = {k: _coerce(getattr(args, k), _param_type(k)) for k in BUILD_KEYS if getattr(args, k, None) is not None}
    salt = (args.salt or "").encode()
    try:
        return AnonParams(salt=salt, **a), BuildParams(**b)
    except ValueError as e:
        raise UsageError(str(e)) from None


def _pid_cols(args) -> list[str]:
    v = args.pid_col
    if isinstance(v, str):
        return _split(v)
    return list(v or [])


def _load(args) -> Table:
    if not args.input:
        raise UsageError("--input is required")
    return read_csv(args.input, _pid_cols(args), columns=_split(args.columns))


def _write_table(path: str | None, table: Table) -> None:
    try:
        if path is None:
            w = csv.writer(sys.stdout, lineterminator="\n")
            w.writerow(table.names)
            for row in table.rows:
                w.writerow([format_value(v, m) for v, m in zip(row, table.columns)])
        else:
            write_csv(path, table.names, table.rows, table.columns)
    except OSError as e:
        raise OutputError(str(e)) from None


def _write_lines(path: str | None, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    if path is None:
        return
    try:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as e:
        raise OutputError(str(e)) from None


def _int(args, key, default):
    return _coerce(getattr(args, key, None), int) if getattr(args, key, None) is not None else default


def _synth_kwargs(args, anon, build) -> dict:
    return dict(anon=anon, build=build, max_dim=_int(args, "max_dim", DEFAULT_MAX_DIM), threads=_int(args, "threads", None))


def cmd_synthesize(args) -> int:
    anon, build = _params(args)
    table = _load(args)
    ranking = read_ranking(args.ranking_file) if args.ranking_file else None
    kw = _synth_kwargs(args, anon, build)
    if args.feature_threshold is not None:
        kw["threshold"] = _coerce(args.feature_threshold, float)
    result = synthesize(
        table,
        columns=_split(args.columns),
        target=args.target,
        ranking=ranking,
        C=_int(args, "cluster_size", 5),
        emit_pid=bool(_coerce(args.emit_pid, bool)),
        **kw,
    )
    _write_table(args.output, result.table)
    out = sys.stderr if args.output is None else sys.stdout
    s = result.summary()
    print(
        f"trees={s['trees']} nodes={s['nodes']} suppressed={s['suppressed_nodes']} "
        f"buckets={s['buckets']} rows_in={len(table)} rows_out={s['rows']} subtables={len(result.plan.subtables)}",
        file=out,
    )
    return EXIT_OK


def cmd_quality(args) -> int:
    orig = read_csv(args.original, _pid_cols(args), columns=_split(args.columns))
    syn_metas = [m for m in orig.columns if m.name not in orig.pid_columns]
    cols = [m.name for m in syn_metas]
    syn = read_csv_as(args.synthetic, syn_metas)
    lines = quality_report(orig, syn, cols)
    for ln in lines:
        print(f"{ln.metric}\t{'+'.join(ln.columns)}\t{ln.score:.6f}")
    for label, value in medians(lines).items():
        print(f"median_{label}\t{value:.6f}")
    _write_lines(args.output, ["metric", "columns", "score"], [(ln.metric, "+".join(ln.columns), f"{ln.score:.6f}") for ln in lines])
    return EXIT_OK


def cmd_privacy(args) -> int:
    anon, build = _params(args)
    n_attacks = _int(args, "n_attacks", AttackConfig.n_attacks)
    if n_attacks < 1:
        raise UsageError("--n-attacks must be at least 1")
    cfg_kw = {"n_attacks": n_attacks, "salt": anon.salt}
    for key in ("confidence_cut", "match_tolerance"):
        if getattr(args, key) is not None:
            cfg_kw[key] = _coerce(getattr(args, key), float)
    cfg = AttackConfig(**cfg_kw)
    table = _load(args)
    if _coerce(args.no_anon, bool):
        synth = identity_synthesizer
    else:
        synth = make_synthesizer(**_synth_kwargs(args, anon, build))
    report = run_suite(table, synth, cfg)
    rows = []
    for c in report.columns:
        pi = "" if c.pi is None else f"{c.pi:.4f}"
        rows.append((c.secret_column, f"{c.p_test:.4f}", f"{c.p_control:.4f}", pi, f"{c.half_width:.4f}", str(c.retained).lower()))
        print("\t".join(rows[-1]))
    _write_lines(args.output, ["secret_column", "p_test", "p_control", "PI", "half_width", "retained"], rows)
    ok = report.passes()
    print(f"policy PI<{report.policy_limit}: {'PASS' if ok else 'FAIL'} ({len(report.retained)} retained columns, {report.retained_attacks} attacks)")
    return EXIT_OK if ok else EXIT_FAILURE


def cmd_inspect(args) -> int:
    anon, build = _params(args)
    table = _load(args)
    cols = [c for c in table.names if c not in table.pid_columns]
    if not cols:
        raise SchemaError("no columns to inspect")
    combos = all_combinations(cols, _int(args, "max_dim", DEFAULT_MAX_DIM))
    forest = build_forest(table, combos, anon, build, _int(args, "threads", None) or 1)
    lines = []
    total = suppressed = 0
    for combo in sorted(forest.trees, key=lambda c: (len(c), c)):
        tree = forest.trees[combo]
        lines.extend(dump_tree(tree))
        nodes = list(tree.nodes())
        total += len(nodes)
        suppressed += sum(n.suppressed for n in nodes)
    text = "\n".join(lines) + "\n"
    if args.output:
        try:
            with open(args.output, "w", encoding="utf-8") as f:
                f.write(text)
        except OSError as e:
            raise OutputError(str(e)) from None
    else:
        sys.stdout.write(text)
    print(f"trees={len(forest.trees)} nodes={total} suppressed={suppressed}", file=sys.stderr)
    return EXIT_OK


COMMANDS = {"synthesize": cmd_synthesize, "quality": cmd_quality, "privacy": cmd_privacy, "inspect": cmd_inspect}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING)
    try:
        args = _merge_config(args)
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, IsADirectoryError, PermissionError, UnicodeDecodeError) as e:
        print(f"cannot read input: {e}", file=sys.stderr)
        return EXIT_INPUT
    except EmptyTableError as e:
        print(f"empty table: {e}", file=sys.stderr)
        return EXIT_EMPTY
    except (SchemaError, CastingError) as e:
        print(f"schema error: {e}", file=sys.stderr)
        return EXIT_SCHEMA
    except OutputError as e:
        print(f"cannot write output: {e}", file=sys.stderr)
        return EXIT_OUTPUT
    except (ClusterError, ForestError, MetricError, PrivacyError) as e:
        print(f"analysis error: {e}", file=sys.stderr)
        return EXIT_ANALYSIS


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
