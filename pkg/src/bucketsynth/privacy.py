"""Inference-attack evaluation: how much synthetic data helps guess a secret column.

An attacker who knows every column of a victim but one finds the closest
synthetic record (Gower distance) and predicts its secret value. Precision on
victims whose rows were synthesized is compared with precision on held-out
control victims; the gap, normalized, is the precision improvement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Callable, Sequence

import numpy as np

from .metrics import is_continuous, numeric
from .microdata import seeded_rng
from .schema import Kind, Table, Value

Synthesizer = Callable[[Table], Table]


class PrivacyError(ValueError):
    pass


@dataclass(frozen=True)
class AttackConfig:
    n_attacks: int = 500
    confidence_cut: float = 0.2
    control_fraction: float = 0.5
    match_tolerance: float = 0.05  # continuous secrets: share of the column's range
    confidence_level: float = 0.95
    salt: bytes = b""
    known_columns: tuple[str, ...] | None = None  # None: all but the secret

    def __post_init__(self) -> None:
        if self.n_attacks < 1:
            raise PrivacyError("n_attacks must be at least 1")
        if not 0 < self.confidence_cut <= 1:
            raise PrivacyError("confidence_cut must lie in (0, 1]")
        if not 0 < self.control_fraction < 1:
            raise PrivacyError("control_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class ColumnRisk:
    secret_column: str
    attacks: int
    p_test: float
    p_control: float
    pi: float | None
    half_width: float
    retained: bool


@dataclass
class AttackReport:
    columns: list[ColumnRisk] = field(default_factory=list)
    policy_limit: float = 0.5

    @property
    def retained(self) -> list[ColumnRisk]:
        return [c for c in self.columns if c.retained]

    @property
    def retained_attacks(self) -> int:
        return sum(c.attacks for c in self.retained)

    def max_pi(self) -> float | None:
        vals = [c.pi for c in self.retained if c.pi is not None]
        return max(vals) if vals else None

    def passes(self) -> bool:
        """Every retained column stays below the policy limit."""
        return all(c.pi < self.policy_limit for c in self.retained if c.pi is not None)


def split_test_control(table: Table, fraction: float, rng: np.random.Generator) -> tuple[Table, Table]:
    """Random disjoint split; ``fraction`` of the rows go to the test side."""
    n = len(table)
    n_test = round(n * fraction)
    if n < 2 or n_test < 1 or n_test >= n:
        raise PrivacyError(f"cannot split {n} rows with test fraction {fraction}")
    perm = rng.permutation(n)
    return table.take(np.sort(perm[:n_test]).tolist()), table.take(np.sort(perm[n_test:]).tolist())


class GowerMatcher:
    """Nearest-record lookup over a fixed synthetic table.

    Numeric distance is ``|a - b| / range``, other kinds 0 when equal and 1
    otherwise; nulls match only nulls.
    """

    def __init__(self, syn: Table, kinds: dict[str, Kind], ranges: dict[str, float] | None = None):
        if len(syn) == 0:
            raise PrivacyError("synthetic table is empty")
        self.syn = syn
        self.kinds = kinds
        self.ranges = dict(ranges or {})
        self._num: dict[str, np.ndarray] = {}
        self._cat: dict[str, tuple[np.ndarray, dict]] = {}
        for c in syn.names:
            if c not in kinds:
                continue
            col = syn.column(c)
            if is_continuous(kinds[c]):
                arr = numeric(col)
                self._num[c] = arr
                if c not in self.ranges:
                    present = arr[~np.isnan(arr)]
                    self.ranges[c] = float(np.ptp(present)) if len(present) else 0.0
            else:
                codes: dict = {}
                self._cat[c] = (np.fromiter((codes.setdefault(v, len(codes)) for v in col), np.int64, len(col)), codes)

    def distances(self, victim: dict[str, Value], known: Sequence[str]) -> np.ndarray:
        total = np.zeros(len(self.syn))
        for c in known:
            v = victim[c]
            if c in self._num:
                arr = self._num[c]
                null = np.isnan(arr)
                if v is None:
                    total += ~null
                    continue
                x = numeric([v])[0]
                scale = self.ranges[c] or 1.0
                d = np.minimum(np.abs(arr - x) / scale, 1.0)
                total += np.where(null, 1.0, d)
            else:
                codes, lookup = self._cat[c]
                k = lookup.get(v, -1)
                total += codes != k
        return total / max(1, len(known))

    def predict(self, victim: dict[str, Value], known: Sequence[str], secret: str) -> Value:
        if not known:
            raise PrivacyError("at least one known column is required")
        best = int(np.argmin(self.distances(victim, known)))  # first index wins ties
        return self.syn.rows[best][self.syn.index(secret)]


def infer_secret(syn: Table, victim: dict[str, Value], known_cols: Sequence[str], secret_col: str) -> Value:
    """The secret of the synthetic record nearest to ``victim`` on ``known_cols``."""
    kinds = {c: syn.meta(c).kind for c in syn.names}
    return GowerMatcher(syn, kinds).predict(victim, known_cols, secret_col)


def precision_improvement(p_test: float, p_control: float) -> float | None:
    """Attack precision gained over the control baseline; None when undefined."""
    if p_control >= 1.0:
        return None
    return (p_test - p_control) / (1.0 - p_control)


def wilson_interval(successes: int, n: int, level: float = 0.95) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    z = NormalDist().inv_cdf(0.5 + level / 2)
    p = successes / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def pi_half_width(s_test: int, s_control: int, n: int, level: float = 0.95) -> float:
    """Half the spread of PI over the Wilson bounds of both precisions."""
    t_lo, t_hi = wilson_interval(s_test, n, level)
    c_lo, c_hi = wilson_interval(s_control, n, level)
    hi = (t_hi - c_lo) / (1 - c_lo) if c_lo < 1 else 1.0
    lo = (t_lo - c_hi) / (1 - c_hi) if c_hi < 1 else -1.0
    return max(0.0, (hi - lo) / 2)


def _matches(pred: Value, truth: Value, continuous: bool, tolerance: float) -> bool:
    if pred is None or truth is None:
        return pred is None and truth is None
    if continuous:
        return bool(abs(numeric([pred])[0] - numeric([truth])[0]) <= tolerance)
    return pred == truth


def run_suite(orig: Table, synthesizer: Synthesizer, cfg: AttackConfig = AttackConfig()) -> AttackReport:
    """Split, synthesize the test half, attack random secrets and score them per column."""
    columns = [c for c in orig.names if c not in orig.pid_columns]
    if len(columns) < 2:
        raise PrivacyError("need at least two columns")
    test, control = split_test_control(orig, 1 - cfg.control_fraction, seeded_rng(cfg.salt, "privacy:split"))
    syn = synthesizer(test)
    kinds = {c: orig.meta(c).kind for c in columns}
    ranges = {}
    for c in columns:
        if is_continuous(kinds[c]):
            arr = numeric(orig.column(c))
            arr = arr[~np.isnan(arr)]
            ranges[c] = float(np.ptp(arr)) if len(arr) else 0.0
    matcher = GowerMatcher(syn, kinds, ranges)
    victims = {
        "test": [dict(zip(test.names, r)) for r in test.rows],
        "control": [dict(zip(control.names, r)) for r in control.rows],
    }
    tally = {c: [0, 0, 0] for c in columns}  # attacks, test hits, control hits
    for i in range(cfg.n_attacks):
        rng = seeded_rng(cfg.salt, f"privacy:attack:{i}")
        secret = columns[int(rng.integers(len(columns)))]
        known = [c for c in (cfg.known_columns or columns) if c != secret]
        tol = cfg.match_tolerance * ranges.get(secret, 0.0)
        cont = is_continuous(kinds[secret])
        tally[secret][0] += 1
        for slot, side in ((1, "test"), (2, "control")):
            victim = victims[side][int(rng.integers(len(victims[side])))]
            pred = matcher.predict(victim, known, secret)
            tally[secret][slot] += int(_matches(pred, victim[secret], cont, tol))
    report = AttackReport()
    for c in columns:
        n, st, sc = tally[c]
        if n == 0:
            continue
        p_test, p_control = st / n, sc / n
        pi = precision_improvement(p_test, p_control)
        half = pi_half_width(st, sc, n, cfg.confidence_level)
        retained = pi is not None and half <= cfg.confidence_cut
        report.columns.append(ColumnRisk(c, n, p_test, p_control, pi, half, retained))
    return report


# ---------------------------------------------------------------- reference synthesizers


def identity_synthesizer(table: Table) -> Table:
    """Releases the data untouched; calibrates the attack's power."""
    return Table(list(table.columns), list(table.rows), list(table.pid_columns), table.name)


def column_shuffle_synthesizer(salt: bytes = b"") -> Synthesizer:
    """Permutes every column independently, destroying all joint structure."""

    def run(table: Table) -> Table:
        rng = seeded_rng(salt, "privacy:shuffle")
        cols = []
        for c in table.names:
            vals = table.column(c)
            cols.append([vals[i] for i in rng.permutation(len(vals))])
        return Table(list(table.columns), list(zip(*cols)), list(table.pid_columns), table.name)

    return run
