"""Query-load and poisoning-success analytics.

Two halves: the DNSSEC re-query process driven by TTL expiry and
authoritative updates (estimated by Monte Carlo), and the per-round
guessing model with its closed-form success curves.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .distributions import Constant, TtlDistribution, Uniform

Z95 = 1.959963984540054
YEAR = 365.25 * 86400.0


class Trigger(enum.Enum):
    TTL_EXPIRY = "ttl"
    AUTH_UPDATE = "update"


@dataclass
class QueryEventTrace:
    query_times: list[float]
    triggers: list[Trigger]

    def __post_init__(self):
        if len(self.query_times) != len(self.triggers):
            raise ValueError("query_times and triggers differ in length")

    def __len__(self):
        return len(self.query_times)

    @property
    def ttl_triggered(self) -> int:
        return sum(1 for t in self.triggers if t is Trigger.TTL_EXPIRY)

    @property
    def update_triggered(self) -> int:
        return len(self.triggers) - self.ttl_triggered


def query_event_process(
    ttl_dist: TtlDistribution,
    update_times: Sequence[float],
    horizon: float,
    rng=None,
) -> QueryEventTrace:
    """DNSSEC re-query instants for one cached validated record.

    A residual-TTL clock starts full at time 0. When it runs out a query
    fires; every authoritative update also fires a query. Either way the
    clock restarts with a fresh TTL draw. An expiry coinciding with an
    update is attributed to the update, so no update is ever suppressed.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    draw = ttl_dist.sampler(rng if rng is not None else np.random.default_rng())
    times: list[float] = []
    triggers: list[Trigger] = []
    ttl, upd = Trigger.TTL_EXPIRY, Trigger.AUTH_UPDATE
    expiry = draw()
    prev = -math.inf
    for u in update_times:
        if u < prev:
            raise ValueError("update_times must be sorted")
        prev = u
        if u > horizon:
            break
        while expiry < u:
            times.append(expiry)
            triggers.append(ttl)
            expiry += draw()
        times.append(u)
        triggers.append(upd)
        expiry = u + draw()
    while expiry <= horizon:
        times.append(expiry)
        triggers.append(ttl)
        expiry += draw()
    return QueryEventTrace(times, triggers)


@dataclass(frozen=True)
class QueryIntervalEstimate:
    """Pooled sufficient statistics for the query-interval estimators."""

    n_queries: int
    ttl_triggered: int
    sum_intervals: float
    sum_sq_intervals: float

    @property
    def update_triggered(self) -> int:
        return self.n_queries - self.ttl_triggered

    @property
    def mean_interval(self) -> float:
        return self.sum_intervals / self.n_queries

    @property
    def mean_interval_ci(self) -> float:
        n = self.n_queries
        var = max(self.sum_sq_intervals / n - self.mean_interval**2, 0.0) * n / max(n - 1, 1)
        return Z95 * math.sqrt(var / n)

    @property
    def ttl_triggered_ratio(self) -> float:
        return self.ttl_triggered / self.n_queries

    @property
    def ratio_ci(self) -> float:
        p = self.ttl_triggered_ratio
        return Z95 * math.sqrt(p * (1 - p) / self.n_queries)

    @classmethod
    def from_trace(cls, trace: QueryEventTrace) -> "QueryIntervalEstimate":
        times = np.asarray(trace.query_times)
        gaps = np.diff(times, prepend=0.0)
        return cls(len(trace), trace.ttl_triggered, float(gaps.sum()), float((gaps**2).sum()))

    @classmethod
    def combine(cls, parts: Iterable["QueryIntervalEstimate"]) -> "QueryIntervalEstimate":
        parts = list(parts)
        return cls(
            sum(p.n_queries for p in parts),
            sum(p.ttl_triggered for p in parts),
            math.fsum(p.sum_intervals for p in parts),
            math.fsum(p.sum_sq_intervals for p in parts),
        )


def mc_query_intervals(ttl_dist: TtlDistribution, update_mean: float, n_updates: int, seed=0) -> QueryIntervalEstimate:
    """Monte Carlo query-interval statistics under exponential inter-update times."""
    if n_updates < 1:
        raise ValueError("n_updates must be >= 1")
    if update_mean <= 0:
        raise ValueError("update_mean must be positive")
    rng = np.random.default_rng(seed)
    updates = np.cumsum(rng.exponential(update_mean, n_updates)).tolist()
    trace = query_event_process(ttl_dist, updates, updates[-1], rng)
    return QueryIntervalEstimate.from_trace(trace)


def independence_bound(i_update: float, i_ttl: float) -> float:
    """Mean interval if updates and expiries were independent superposed processes."""
    if i_update <= 0 or i_ttl <= 0:
        raise ValueError("intervals must be positive")
    return i_update * i_ttl / (i_update + i_ttl)


# -- guessing model --------------------------------------------------------


def guess_space_size(id_space: int = 65536, port_space: int = 64000, n_auth: float = 2.5, form: str = "additive") -> int:
    if form == "additive":
        return int(round((id_space + port_space) * n_auth))
    if form == "product":
        return int(round(id_space * port_space * n_auth))
    raise ValueError(f"unknown guess-space form {form!r}")


def p_round_fail(h: int, d: int, g: int) -> float:
    """Probability that all h forged guesses miss d outstanding identities out of g."""
    if h < 0 or d < 0 or g < 1:
        raise ValueError("need h >= 0, d >= 0, g >= 1")
    if d > g:
        raise ValueError("more outstanding queries than identities")
    if h == 0:
        return 1.0
    if d == g:
        return 0.0
    return math.exp(h * math.log1p(-d / g))


def success_within_rounds(i: int, h: int, d: int, g: int) -> float:
    if i < 0:
        raise ValueError("i must be >= 0")
    if i == 0:
        return 0.0
    fail = p_round_fail(h, d, g)
    if fail == 0.0:
        return 1.0
    return -math.expm1(i * math.log(fail))


class UnreachableTarget(ValueError):
    pass


def round_period(lifecycle: float, response_time: float = 0.02, caching: bool = True) -> float:
    """Attacker's wait between rounds: one validated-record lifetime, or two response times without the priority cache."""
    return lifecycle if caching else 2.0 * response_time


def rounds_to_success(target_prob: float, h: int, d: int, g: int) -> int:
    if not 0 < target_prob < 1:
        raise ValueError("target_prob must be in (0, 1)")
    fail = p_round_fail(h, d, g)
    if fail >= 1.0:
        raise UnreachableTarget("attacker never succeeds with these parameters")
    if fail == 0.0:
        return 1
    log_fail = math.log(fail)
    i = max(1, math.ceil(math.log1p(-target_prob) / log_fail))
    # guard the ceil against rounding at the boundary
    while -math.expm1(i * log_fail) < target_prob:
        i += 1
    while i > 1 and -math.expm1((i - 1) * log_fail) >= target_prob:
        i -= 1
    return i


def time_to_success(
    target_prob: float,
    lifecycle: float,
    tod: int,
    d: int,
    g: int,
    response_time: float = 0.02,
    caching: bool = True,
    h: Optional[int] = None,
) -> float:
    """Seconds until the cumulative poisoning probability reaches target_prob.

    Each round gives the attacker ToD-1 undetected guesses unless `h` says otherwise.
    """
    if tod < 1:
        raise ValueError("tod must be >= 1")
    h = tod - 1 if h is None else h
    i = rounds_to_success(target_prob, h, d, g)
    return i * round_period(lifecycle, response_time, caching)


@dataclass
class SuccessCurve:
    """Right-continuous stair-step of cumulative success probability."""

    points: list[tuple[float, float]]

    def at(self, t: float) -> float:
        value = 0.0
        lo, hi = 0, len(self.points)
        while lo < hi:
            mid = (lo + hi) // 2
            if self.points[mid][0] <= t:
                lo = mid + 1
            else:
                hi = mid
        if lo:
            value = self.points[lo - 1][1]
        return value

    def increments(self) -> list[float]:
        probs = [p for _, p in self.points]
        return [b - a for a, b in zip(probs, probs[1:])]


def success_curve(
    horizon: float,
    lifecycle: float,
    tod: int,
    d: int,
    g: int,
    h: Optional[int] = None,
    caching: bool = True,
    response_time: float = 0.02,
) -> SuccessCurve:
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    h = tod - 1 if h is None else h
    period = round_period(lifecycle, response_time, caching)
    points = [(0.0, 0.0)]
    k = 1
    while k * period <= horizon:
        points.append((k * period, success_within_rounds(k, h, d, g)))
        k += 1
    return SuccessCurve(points)


def mc_round_fail(d: int, g: int, h: int, trials: int, seed=0, sequential: bool = False) -> tuple[float, float]:
    """Monte Carlo estimate of the all-guesses-miss probability, with its binomial standard error.

    Each trial draws d distinct secret identities and h attacker guesses,
    uniform with replacement or as a sweep from a random start.
    """
    if not 0 <= d <= g:
        raise ValueError("need 0 <= d <= g")
    if sequential and h > g:
        raise ValueError("a sweep cannot make more than g distinct guesses")
    rng = np.random.default_rng(seed)
    secrets = _distinct_rows(rng, trials, d, g)
    if sequential:
        start = rng.integers(0, g, (trials, 1))
        guesses = (start + np.arange(h)) % g
    else:
        guesses = rng.integers(0, g, (trials, h))
    hit = np.zeros(trials, dtype=bool)
    for j in range(h):
        hit |= (guesses[:, j : j + 1] == secrets).any(axis=1)
    p = 1.0 - hit.mean()
    return float(p), math.sqrt(p * (1 - p) / trials)


def _distinct_rows(rng: np.random.Generator, rows: int, k: int, g: int) -> np.ndarray:
    out = rng.integers(0, g, (rows, k))
    if k < 2:
        return out
    while True:
        s = np.sort(out, axis=1)
        bad = (s[:, 1:] == s[:, :-1]).any(axis=1)
        if not bad.any():
            return out
        out[bad] = rng.integers(0, g, (int(bad.sum()), k))


__all__ = [
    "Constant",
    "QueryEventTrace",
    "QueryIntervalEstimate",
    "SuccessCurve",
    "Trigger",
    "Uniform",
    "UnreachableTarget",
    "YEAR",
    "guess_space_size",
    "independence_bound",
    "mc_query_intervals",
    "mc_round_fail",
    "p_round_fail",
    "query_event_process",
    "round_period",
    "rounds_to_success",
    "success_curve",
    "success_within_rounds",
    "time_to_success",
]
