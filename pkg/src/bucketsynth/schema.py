"""Table ingestion, column typing and casting between values and reals."""

from __future__ import annotations

import csv
import enum
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Any, Iterable, Sequence

import numpy as np

from .snapping import SnappedRange, null_code_for_column, snap_covering

DEFAULT_EPOCH = datetime(1800, 1, 1, tzinfo=timezone.utc)

Value = Any  # None | str | int | float | bool | datetime


class SchemaError(ValueError):
    pass


class EmptyTableError(SchemaError):
    pass


class CastingError(ValueError):
    pass


class Kind(str, enum.Enum):
    TEXT = "text"
    INTEGER = "integer"
    REAL = "real"
    BOOLEAN = "boolean"
    DATETIME = "datetime"

    @property
    def is_categorical(self) -> bool:
        return self in (Kind.TEXT, Kind.BOOLEAN)


@dataclass
class ColumnMeta:
    name: str
    kind: Kind
    pid_role: bool = False
    casting_table: dict[str, int] = field(default_factory=dict)
    datetime_epoch: datetime = DEFAULT_EPOCH
    tz_aware: bool = True

    @property
    def sorted_strings(self) -> list[str]:
        return sorted(self.casting_table, key=self.casting_table.__getitem__)

    def build_casting(self, values: Iterable[Value]) -> None:
        """Build the text code table or datetime epoch from a full column."""
        present = [v for v in values if v is not None]
        if self.kind is Kind.TEXT:
            self.casting_table = {s: i for i, s in enumerate(sorted(set(present)))}
        elif self.kind is Kind.DATETIME and present:
            earliest = min(present)
            if earliest < self.datetime_epoch:
                self.datetime_epoch = datetime(earliest.year, 1, 1, tzinfo=timezone.utc)


@dataclass
class Table:
    columns: list[ColumnMeta]
    rows: list[tuple]
    pid_columns: list[str] = field(default_factory=list)
    name: str = "table"

    def __post_init__(self) -> None:
        width = len(self.columns)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise SchemaError(f"row {i} has {len(row)} values, expected {width}")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise SchemaError(f"unknown column {name!r}") from None

    def meta(self, name: str) -> ColumnMeta:
        return self.columns[self.index(name)]

    def column(self, name: str) -> list[Value]:
        i = self.index(name)
        return [row[i] for row in self.rows]

    def __len__(self) -> int:
        return len(self.rows)

    def select(self, names: Sequence[str]) -> "Table":
        idx = [self.index(n) for n in names]
        return Table(
            columns=[self.columns[i] for i in idx],
            rows=[tuple(row[i] for i in idx) for row in self.rows],
            pid_columns=[p for p in self.pid_columns if p in names],
            name=self.name,
        )

    def take(self, row_indices: Iterable[int]) -> "Table":
        return Table(self.columns, [self.rows[i] for i in row_indices], list(self.pid_columns), self.name)

    def pid_codes(self) -> list[tuple[np.ndarray, list[Value]]]:
        """Per protected-entity type: integer PID code per row and the distinct PIDs.

        Without PID columns every row is its own entity.
        """
        n = len(self.rows)
        if not self.pid_columns:
            return [(np.arange(n, dtype=np.int64), list(range(n)))]
        out = []
        for name in self.pid_columns:
            i = self.index(name)
            codes: dict[Value, int] = {}
            arr = np.fromiter((codes.setdefault(row[i], len(codes)) for row in self.rows), np.int64, n)
            out.append((arr, list(codes)))
        return out


# ---------------------------------------------------------------- parsing

_BOOL = {"true": True, "false": False}


def parse_datetime(s: str) -> datetime:
    s = s.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    return dt if dt.tzinfo else dt.replace(tzinfo=timezone.utc)


def _parses(kind: Kind, s: str) -> bool:
    try:
        parse_value(s, kind)
    except (ValueError, OverflowError):
        return False
    return True


def parse_value(s: str | None, kind: Kind) -> Value:
    if s is None or s == "":
        return None
    if kind is Kind.TEXT:
        return s
    if kind is Kind.BOOLEAN:
        try:
            return _BOOL[s.strip().lower()]
        except KeyError:
            raise ValueError(f"not a boolean: {s!r}") from None
    if kind is Kind.INTEGER:
        return int(s)
    if kind is Kind.REAL:
        x = float(s)
        if not math.isfinite(x):
            raise ValueError(f"non-finite real: {s!r}")
        return x
    if "-" not in s:
        raise ValueError(f"not a datetime: {s!r}")
    return parse_datetime(s)


_KIND_ORDER = (Kind.BOOLEAN, Kind.INTEGER, Kind.REAL, Kind.DATETIME)


def infer_column_kinds(raw_rows: Sequence[Sequence[str]], header: Sequence[str] | None = None) -> list[ColumnMeta]:
    """Pick the narrowest kind that parses every non-empty cell of each column."""
    if not raw_rows:
        raise SchemaError("need at least one row to infer column kinds")
    width = len(raw_rows[0])
    if width == 0:
        raise SchemaError("table has zero columns")
    if header is None:
        header = [f"c{i}" for i in range(width)]
    metas = []
    for j in range(width):
        cells = {row[j] for row in raw_rows if row[j] != ""}
        kind = Kind.TEXT
        if cells:
            for candidate in _KIND_ORDER:
                if all(_parses(candidate, c) for c in cells):
                    kind = candidate
                    break
        metas.append(ColumnMeta(name=header[j], kind=kind))
    return metas


def _mark_tz(meta: ColumnMeta, raw: Iterable[str]) -> None:
    for s in raw:
        if s:
            s = s.strip()
            meta.tz_aware = s.endswith(("Z", "z")) or datetime.fromisoformat(s.rstrip("Zz")).tzinfo is not None
            return


def table_from_raw(
    header: Sequence[str], raw_rows: Sequence[Sequence[str]], pid_columns: Sequence[str] = (), name: str = "table"
) -> Table:
    metas = infer_column_kinds(raw_rows, header)
    for p in pid_columns:
        if p not in header:
            raise SchemaError(f"unknown PID column {p!r}")
    rows = [tuple(parse_value(cell, m.kind) for cell, m in zip(row, metas)) for row in raw_rows]
    for j, m in enumerate(metas):
        m.pid_role = m.name in pid_columns
        if m.kind is Kind.DATETIME:
            _mark_tz(m, (r[j] for r in raw_rows))
        m.build_casting(row[j] for row in rows)
    return Table(metas, rows, list(pid_columns), name)


def make_table(
    names: Sequence[str],
    kinds: Sequence[Kind | str],
    rows: Iterable[Sequence[Value]],
    pid_columns: Sequence[str] = (),
    name: str = "table",
) -> Table:
    """Table from already-typed values, with casting metadata built."""
    rows = [tuple(r) for r in rows]
    metas = [ColumnMeta(n, Kind(k), pid_role=n in pid_columns) for n, k in zip(names, kinds)]
    for j, m in enumerate(metas):
        m.build_casting(r[j] for r in rows)
    return Table(metas, rows, list(pid_columns), name)


def read_csv(
    path: str | os.PathLike,
    pid_columns: Sequence[str] = (),
    name: str | None = None,
    columns: Sequence[str] | None = None,
) -> Table:
    """Read a CSV with a header row, inferring column kinds.

    With ``columns`` given, only those (plus ``pid_columns``) are parsed.
    """
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyTableError(f"{path}: empty file") from None
        raw = [row for row in reader if row]
    if not header:
        raise SchemaError(f"{path}: zero columns")
    for i, row in enumerate(raw):
        if len(row) != len(header):
            raise SchemaError(f"{path}: row {i + 1} has {len(row)} cells, header has {len(header)}")
    if columns is not None:
        wanted = list(dict.fromkeys([*columns, *pid_columns]))
        missing = [c for c in wanted if c not in header]
        if missing:
            raise SchemaError(f"{path}: unknown columns {missing}")
        idx = [header.index(c) for c in wanted]
        header = wanted
        raw = [[row[i] for i in idx] for row in raw]
    if not raw:
        raise EmptyTableError(f"{path}: no data rows")
    if name is None:
        name = os.path.splitext(os.path.basename(path))[0]
    return table_from_raw(header, raw, pid_columns, name)


def read_csv_as(path: str | os.PathLike, metas: Sequence[ColumnMeta]) -> Table:
    """Read the columns named by ``metas`` from a CSV, typed by them.

    Extra columns in the file are ignored; column order follows ``metas``.
    """
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise EmptyTableError(f"{path}: empty file")
        raw = [row for row in reader if row]
    missing = [m.name for m in metas if m.name not in header]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}")
    idx = [header.index(m.name) for m in metas]
    rows = [tuple(_lenient(row[i], m.kind) for i, m in zip(idx, metas)) for row in raw]
    return Table([ColumnMeta(m.name, m.kind, tz_aware=m.tz_aware) for m in metas], rows)


def _lenient(cell: str, kind: Kind) -> Value:
    try:
        return parse_value(cell, kind)
    except ValueError:
        if kind is Kind.INTEGER:
            return parse_value(cell, Kind.REAL)
        raise


def format_value(v: Value, meta: ColumnMeta | None = None) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, datetime):
        if meta is not None and not meta.tz_aware:
            return v.replace(tzinfo=None).isoformat()
        return v.isoformat().replace("+00:00", "Z")
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: str | os.PathLike, names: Sequence[str], rows: Iterable[Sequence[Value]],
              metas: Sequence[ColumnMeta | None] | None = None) -> None:
    metas = metas or [None] * len(names)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(names)
        for row in rows:
            w.writerow([format_value(v, m) for v, m in zip(row, metas)])


# ---------------------------------------------------------------- casting


def cast_to_real(v: Value, m: ColumnMeta, null_code: float) -> float:
    if v is None:
        return float(null_code)
    kind = m.kind
    if kind is Kind.BOOLEAN:
        return 1.0 if v else 0.0
    if kind is Kind.INTEGER or kind is Kind.REAL:
        return float(v)
    if kind is Kind.DATETIME:
        return (v - m.datetime_epoch).total_seconds()
    try:
        return float(m.casting_table[v])
    except KeyError:
        raise CastingError(f"{v!r} missing from casting table of {m.name!r}") from None


def text_generalize(strings_in_bucket: Sequence[str], rng: np.random.Generator) -> str:
    """Longest common prefix, a star, and a fresh random three-digit suffix."""
    prefix = os.path.commonprefix(list(strings_in_bucket))
    return f"{prefix}*{int(rng.integers(0, 1000)):03d}"


def strings_in_range(m: ColumnMeta, r: SnappedRange) -> list[str]:
    strings = m.sorted_strings
    lo = max(0, math.ceil(r.lo))
    hi = min(len(strings), math.ceil(r.hi))
    return strings[lo:hi]


def cast_back(x: float, m: ColumnMeta, r: SnappedRange, rng: np.random.Generator, null_code: float | None = None) -> Value:
    if null_code is not None and x >= null_code:
        return None
    if not r.contains(x):
        raise CastingError(f"{x!r} lies outside {r}")
    kind = m.kind
    if kind is Kind.REAL:
        return float(x)
    if kind is Kind.INTEGER:
        return _int_in_range(x, r)
    if kind is Kind.BOOLEAN:
        return _int_in_range(x, r) >= 1
    if kind is Kind.DATETIME:
        secs = math.floor(x) if r.is_singularity or r.size >= 1 else x
        return m.datetime_epoch + timedelta(seconds=secs)
    if r.is_singularity:
        return m.sorted_strings[int(x)]
    strings = strings_in_range(m, r)
    if len(strings) == 1:
        return strings[0]
    return text_generalize(strings, rng)


def _int_in_range(x: float, r: SnappedRange) -> int:
    if r.is_singularity:
        return int(round(r.lo))
    k = math.floor(x)
    return int(min(max(k, math.ceil(r.lo)), math.ceil(r.hi) - 1))


@dataclass
class EncodedColumn:
    """A column cast to reals, with its null code and snapped root."""

    meta: ColumnMeta
    values: np.ndarray
    null_code: float | None
    root: SnappedRange

    def clamp(self, root: SnappedRange) -> "EncodedColumn":
        top = np.nextafter(root.hi, -math.inf)
        vals = np.clip(self.values, root.lo, top)
        return EncodedColumn(self.meta, vals, self.null_code, root)


def encode_column(values: Sequence[Value], meta: ColumnMeta) -> EncodedColumn:
    present = [v for v in values if v is not None]
    if present:
        reals = [cast_to_real(v, meta, 0.0) for v in present]
        data_root = snap_covering(min(reals), max(reals))
    else:
        data_root = None
    null_code = None
    root = data_root
    if len(present) < len(values):
        null_code, root = null_code_for_column(data_root)
    arr = np.fromiter((cast_to_real(v, meta, null_code) for v in values), np.float64, len(values))
    return EncodedColumn(meta, arr, null_code, root)
