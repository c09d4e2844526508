"""Small two-column tables with assorted marginal shapes and dependencies.

Used for quality and privacy sweeps at desk scale.
"""

from __future__ import annotations

from datetime import datetime, timedelta, timezone
from typing import Callable

import numpy as np

from .schema import Kind, Table, make_table

DEFAULT_ROWS = 7000


def _real(x: np.ndarray, digits: int = 3) -> list[float]:
    return np.round(x, digits).tolist()


def correlated_normals(rng, n):
    x = rng.normal(50, 10, n)
    y = 0.7 * x + rng.normal(0, 7, n)
    return ["x", "y"], [Kind.REAL, Kind.REAL], zip(_real(x), _real(y))


def income_by_age(rng, n):
    age = rng.integers(18, 90, n)
    income = np.exp(9.5 + 0.01 * age + rng.normal(0, 0.6, n))
    return ["age", "income"], [Kind.INTEGER, Kind.REAL], zip(age.tolist(), _real(income, 0))


def independent_uniforms(rng, n):
    return ["u", "v"], [Kind.REAL, Kind.REAL], zip(_real(rng.uniform(0, 1, n), 5), _real(rng.uniform(-300, 300, n)))


def exponential_linear(rng, n):
    x = rng.exponential(3.0, n)
    y = 2 * x + rng.normal(0, 2, n)
    return ["wait", "cost"], [Kind.REAL, Kind.REAL], zip(_real(x), _real(y))


def bimodal_by_group(rng, n):
    group = rng.choice(["alpha", "beta", "delta", "gamma"], n, p=[0.4, 0.3, 0.2, 0.1])
    centre = np.select([group == "alpha", group == "beta"], [20.0, 60.0], 40.0)
    value = np.where(rng.random(n) < 0.5, centre - 10, centre + 10) + rng.normal(0, 3, n)
    return ["group", "value"], [Kind.TEXT, Kind.REAL], zip(group.tolist(), _real(value))


def poisson_flag(rng, n):
    visits = rng.poisson(4, n)
    flag = rng.random(n) < 1 / (1 + np.exp(-(visits - 4)))
    return ["visits", "flag"], [Kind.INTEGER, Kind.BOOLEAN], zip(visits.tolist(), flag.tolist())


def zipf_category_amount(rng, n):
    ranks = np.minimum(rng.zipf(1.6, n), 20)
    city = np.array([f"city{r:02d}" for r in range(1, 21)])[ranks - 1]
    amount = rng.gamma(2.0, 10 + ranks, n)
    return ["city", "amount"], [Kind.TEXT, Kind.REAL], zip(city.tolist(), _real(amount, 2))


def timestamp_trend(rng, n):
    start = datetime(2020, 1, 1, tzinfo=timezone.utc)
    secs = rng.uniform(0, 3 * 365 * 86400, n).astype(np.int64)
    when = [start + timedelta(seconds=int(s)) for s in secs]
    level = secs / 86400 / 10 + rng.normal(0, 15, n)
    return ["when", "level"], [Kind.DATETIME, Kind.REAL], zip(when, _real(level))


def quadratic(rng, n):
    x = rng.uniform(-10, 10, n)
    y = x**2 + rng.normal(0, 5, n)
    return ["x", "y"], [Kind.REAL, Kind.REAL], zip(_real(x), _real(y))


def dependent_categories(rng, n):
    colour = rng.choice(["blue", "green", "red"], n, p=[0.5, 0.3, 0.2])
    probs = {"blue": [0.7, 0.2, 0.1], "green": [0.2, 0.6, 0.2], "red": [0.1, 0.2, 0.7]}
    size = [rng.choice(["large", "medium", "small"], p=probs[c]) for c in colour]
    return ["colour", "size"], [Kind.TEXT, Kind.TEXT], zip(colour.tolist(), size)


def skewed_with_nulls(rng, n):
    share = rng.beta(2, 8, n)
    level = rng.integers(1, 11, n)
    share_v = [None if m else v for v, m in zip(_real(share, 4), rng.random(n) < 0.1)]
    level_v = [None if m else v for v, m in zip(level.tolist(), rng.random(n) < 0.05)]
    return ["share", "level"], [Kind.REAL, Kind.INTEGER], zip(share_v, level_v)


def heavy_tail_sign(rng, n):
    t = rng.standard_t(3, n)
    positive = (t + rng.normal(0, 0.5, n)) > 0
    return ["ret", "up"], [Kind.REAL, Kind.BOOLEAN], zip(_real(t, 4), positive.tolist())


GENERATORS: dict[str, Callable] = {
    "correlated_normals": correlated_normals,
    "income_by_age": income_by_age,
    "independent_uniforms": independent_uniforms,
    "exponential_linear": exponential_linear,
    "bimodal_by_group": bimodal_by_group,
    "poisson_flag": poisson_flag,
    "zipf_category_amount": zipf_category_amount,
    "timestamp_trend": timestamp_trend,
    "quadratic": quadratic,
    "dependent_categories": dependent_categories,
    "skewed_with_nulls": skewed_with_nulls,
    "heavy_tail_sign": heavy_tail_sign,
}


def make_dataset(name: str, n: int = DEFAULT_ROWS, seed: int = 0) -> Table:
    rng = np.random.default_rng([seed, list(GENERATORS).index(name)])
    names, kinds, rows = GENERATORS[name](rng, n)
    return make_table(names, kinds, rows, name=name)


def desk_suite(n: int = DEFAULT_ROWS, seed: int = 0) -> dict[str, Table]:
    return {name: make_dataset(name, n, seed) for name in GENERATORS}
