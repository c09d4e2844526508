"""Quality scores comparing a synthetic table with its original."""

from __future__ import annotations

import enum
import itertools
import math
from collections import Counter
from dataclasses import dataclass
from datetime import datetime
from typing import Iterable, Sequence

import numpy as np

from .schema import Kind, SchemaError, Table, Value


class MetricError(ValueError):
    pass


class ScoreKind(str, enum.Enum):
    MARGINAL_CONTINUOUS = "marginal_continuous"
    MARGINAL_CATEGORICAL = "marginal_categorical"
    PAIR_CONTINUOUS = "pair_continuous"
    PAIR_CATEGORICAL = "pair_categorical"


@dataclass(frozen=True)
class QualityScore:
    value: float
    kind: ScoreKind

    def __float__(self) -> float:
        return self.value


def is_continuous(kind: Kind) -> bool:
    return kind in (Kind.INTEGER, Kind.REAL, Kind.DATETIME)


def _as_float(v: Value) -> float:
    if v is None:
        return math.nan
    if isinstance(v, datetime):
        return v.timestamp()
    return float(v)


def numeric(values: Sequence[Value]) -> np.ndarray:
    """Floats with NaN for nulls; datetimes become POSIX seconds."""
    return np.fromiter((_as_float(v) for v in values), np.float64, len(values))


# ---------------------------------------------------------------- marginals


def ks_statistic(a: np.ndarray, b: np.ndarray) -> float:
    """Two-sample Kolmogorov-Smirnov distance; NaNs sort above every value."""
    a = np.sort(np.where(np.isnan(a), np.inf, a))
    b = np.sort(np.where(np.isnan(b), np.inf, b))
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / len(a)
    fb = np.searchsorted(b, grid, side="right") / len(b)
    return float(np.max(np.abs(fa - fb)))


def tvd(a: Iterable, b: Iterable) -> float:
    """Total variation distance between two empirical distributions."""
    ca, cb = Counter(a), Counter(b)
    na, nb = sum(ca.values()), sum(cb.values())
    return 0.5 * sum(abs(ca[k] / na - cb[k] / nb) for k in ca.keys() | cb.keys())


def marginal_quality(orig: Sequence[Value], syn: Sequence[Value], kind: Kind) -> QualityScore:
    if not len(orig) or not len(syn):
        raise MetricError("empty column")
    if is_continuous(kind):
        return QualityScore(1.0 - ks_statistic(numeric(orig), numeric(syn)), ScoreKind.MARGINAL_CONTINUOUS)
    return QualityScore(1.0 - tvd(orig, syn), ScoreKind.MARGINAL_CATEGORICAL)


# ---------------------------------------------------------------- pairs


def decile_bins(orig: np.ndarray, values: np.ndarray) -> list:
    """Bin labels by deciles of the original; NaN gets its own label."""
    present = orig[~np.isnan(orig)]
    edges = np.unique(np.quantile(present, np.linspace(0.1, 0.9, 9))) if len(present) else np.empty(0)
    labels = np.searchsorted(edges, values, side="right")
    return [None if math.isnan(v) else int(k) for v, k in zip(values.tolist(), labels.tolist())]


def _labels(orig: Sequence[Value], col: Sequence[Value], kind: Kind) -> list:
    if is_continuous(kind):
        return decile_bins(numeric(orig), numeric(col))
    return list(col)


def pearson(x: np.ndarray, y: np.ndarray) -> float | None:
    keep = ~(np.isnan(x) | np.isnan(y))
    x, y = x[keep], y[keep]
    if len(x) < 2 or np.ptp(x) == 0 or np.ptp(y) == 0:
        return None
    return float(np.corrcoef(x, y)[0, 1])


def pair_quality(
    orig_pair: tuple[Sequence[Value], Sequence[Value]],
    syn_pair: tuple[Sequence[Value], Sequence[Value]],
    kinds: tuple[Kind, Kind],
) -> QualityScore:
    """Correlation similarity for two continuous columns, contingency similarity otherwise."""
    (oa, ob), (sa, sb) = orig_pair, syn_pair
    if not len(oa) or not len(sa):
        raise MetricError("empty column")
    if all(is_continuous(k) for k in kinds):
        r_orig = pearson(numeric(oa), numeric(ob))
        r_syn = pearson(numeric(sa), numeric(sb))
        if r_orig is not None and r_syn is not None:
            return QualityScore(1.0 - abs(r_orig - r_syn) / 2, ScoreKind.PAIR_CONTINUOUS)
    orig_cells = zip(_labels(oa, oa, kinds[0]), _labels(ob, ob, kinds[1]))
    syn_cells = zip(_labels(oa, sa, kinds[0]), _labels(ob, sb, kinds[1]))
    return QualityScore(1.0 - tvd(orig_cells, syn_cells), ScoreKind.PAIR_CATEGORICAL)


# ---------------------------------------------------------------- summaries


def improvement_factor(qs_low: float, qs_high: float) -> float:
    """How many times smaller the error of ``qs_high`` is than that of ``qs_low``."""
    if qs_high >= 1.0:
        return math.inf
    return (1.0 - qs_low) / (1.0 - qs_high)


def ml_penalty(s_orig: float, s_syn: float) -> float:
    """Relative loss of an ML score when training on synthetic data."""
    top = max(s_orig, s_syn)
    if top == 0:
        return 0.0
    return (s_orig - s_syn) / top


@dataclass(frozen=True)
class ReportLine:
    metric: str
    columns: tuple[str, ...]
    score: float


def quality_report(orig: Table, syn: Table, columns: Sequence[str] | None = None) -> list[ReportLine]:
    """Marginal score per column and pair score per column pair, matched by name."""
    if columns is None:
        columns = [c for c in orig.names if c not in orig.pid_columns]
    missing = [c for c in columns if c not in syn.names]
    if missing:
        raise SchemaError(f"synthetic table lacks columns {missing}")
    kinds = {c: orig.meta(c).kind for c in columns}
    o = {c: orig.column(c) for c in columns}
    s = {c: syn.column(c) for c in columns}
    lines = []
    for c in columns:
        q = marginal_quality(o[c], s[c], kinds[c])
        lines.append(ReportLine(q.kind.value, (c,), q.value))
    for a, b in itertools.combinations(columns, 2):
        q = pair_quality((o[a], o[b]), (s[a], s[b]), (kinds[a], kinds[b]))
        lines.append(ReportLine(q.kind.value, (a, b), q.value))
    return lines


def medians(lines: Sequence[ReportLine]) -> dict[str, float]:
    """Median marginal and pair scores."""
    out = {}
    for label, width in (("marginal", 1), ("pair", 2)):
        vals = [ln.score for ln in lines if len(ln.columns) == width]
        if vals:
            out[label] = float(np.median(vals))
    return out
