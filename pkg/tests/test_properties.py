import io
import random

import numpy as np

from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from tdwn import analytics as an
from tdwn.attacker import AttackConfig, GuessStrategy
from tdwn.detector import DetectorConfig
from tdwn.distributions import Constant, ExponentialUpdates, Uniform
from tdwn.dns_model import GuessSpace, MatchKind, OutstandingQuery, QType, QuestionKey, ResourceRecord, ResponseMsg, match_response
from tdwn.priority_cache import TwoTierCache
from tdwn.resolver import ResolverConfig
from tdwn.sim import AuthServerModel, Scenario, run

SLOW = settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])

ttl_dists = st.one_of(
    st.floats(50, 5000).map(Constant),
    st.tuples(st.floats(10, 2000), st.floats(1, 2000)).map(lambda t: Uniform(t[0], t[0] + t[1])),
)


@given(st.integers(0, 50), st.integers(0, 64), st.integers(1, 64))
def test_p_round_fail_is_probability_and_monotone(h, d, extra):
    g = d + extra
    p = an.p_round_fail(h, d, g)
    assert 0.0 <= p <= 1.0
    assert an.p_round_fail(h + 1, d, g) <= p
    if d < g:
        assert an.p_round_fail(h, d + 1, g) <= p


@given(st.integers(1, 10), st.integers(1, 40), st.integers(100, 10**6), st.integers(1, 200))
def test_success_grows_with_rounds(h, d, g, i):
    a = an.success_within_rounds(i, h, d, g)
    b = an.success_within_rounds(i + 1, h, d, g)
    assert 0.0 <= a <= b <= 1.0


@settings(deadline=None)
@given(st.integers(2, 6), st.integers(1, 40), st.floats(60, 36000), st.floats(1e4, 1e7))
def test_success_curve_invariants(tod, d, life, horizon):
    curve = an.success_curve(horizon, life, tod, d, 323840)
    probs = [p for _, p in curve.points]
    assert probs[0] == 0.0 and probs == sorted(probs) and probs[-1] <= 1.0
    assert all(x >= 0 for x in curve.increments())
    # right-continuity at each step
    for t, p in curve.points:
        assert curve.at(t) == p


@given(ttl_dists, st.lists(st.floats(0.001, 1e5), max_size=60, unique=True), st.floats(1.0, 1e5), st.integers(0, 2**32 - 1))
def test_query_event_process_invariants(ttl, updates, horizon, seed):
    updates = sorted(updates)
    trace = an.query_event_process(ttl, updates, horizon, np.random.default_rng(seed))
    times = trace.query_times
    assert len(times) == len(trace.triggers)
    assert all(a < b for a, b in zip(times, times[1:]))
    assert trace.update_triggered == sum(1 for u in updates if u <= horizon)
    hi = ttl.value if isinstance(ttl, Constant) else ttl.hi
    gaps = [b - a for a, b in zip([0.0] + times, times)]
    assert all(gap <= hi * (1 + 1e-9) for gap in gaps)
    assert all(t <= horizon for t in times)


@SLOW
@given(ttl_dists, st.floats(50, 3000), st.integers(0, 1000))
def test_mean_interval_above_independence_bound(ttl, m, seed):
    est = an.mc_query_intervals(ttl, m, 20000, seed=seed)
    bound = an.independence_bound(m, ttl.mean)
    assert est.mean_interval >= 0.99 * bound


@given(st.lists(st.integers(0, 255), min_size=1, max_size=20, unique=True), st.integers(0, 255), st.randoms())
def test_match_response_order_independent(ids, guess, rnd):
    space = GuessSpace(size_override=256)
    q = QuestionKey("x.foo.com.")
    outs = [OutstandingQuery(q, space.decode(k), float(i % 3)) for i, k in enumerate(ids)]
    resp = ResponseMsg(q, space.decode(guess), (ResourceRecord("x.foo.com.", QType.A, "v", 1.0),))
    shuffled = list(outs)
    rnd.shuffle(shuffled)
    a, b = match_response(resp, outs), match_response(resp, shuffled)
    assert a == b
    assert (a.kind is MatchKind.GENUINE_MATCH) == (guess in ids)


ops = st.lists(
    st.tuples(st.sampled_from(["validated", "normal", "expire"]), st.sampled_from(["X", "Y", "Z"]), st.floats(1, 100), st.floats(0, 5)),
    max_size=40,
)


@given(ops)
def test_priority_entry_never_displaced_by_unsigned(seq):
    cache = TwoTierCache()
    key = ("ns.foo.com.", QType.A)
    now = 0.0
    for op, value, ttl, step in seq:
        now += step
        live = cache.priority.get(key)
        live = live if live and live.expires_at > now else None
        rec = ResourceRecord("ns.foo.com.", QType.A, value, ttl, signed=(op == "validated"))
        if op == "validated":
            cache.insert_validated(rec, now)
        elif op == "normal":
            cache.insert_normal(rec, now)
            if live is not None:
                assert cache.lookup(key, now).value == live.record.value
        else:
            cache.expire(now)
        entry = cache.priority.get(key)
        if entry and entry.expires_at > now:
            assert cache.lookup(key, now) == entry.record


scenarios = st.builds(
    dict,
    seed=st.integers(0, 2**63),
    tod=st.integers(2, 5),
    g=st.integers(16, 4096),
    life=st.floats(60, 36000),
    bogus=st.floats(50, 2000),
    strategy=st.sampled_from(list(GuessStrategy)),
    update=st.floats(30, 20000),
    priority=st.booleans(),
)


def build(p):
    return Scenario(
        resolver=ResolverConfig(
            detector=DetectorConfig(p["tod"]),
            guess_space=GuessSpace(size_override=p["g"]),
            priority_cache_enabled=p["priority"],
        ),
        attacker=AttackConfig(rounds=8, bogus_response_rate=p["bogus"], guess_strategy=p["strategy"]),
        auth=AuthServerModel(ttl_distribution=Constant(p["life"]), update_process=ExponentialUpdates(p["update"])),
        seed=p["seed"],
        duration=8 * p["life"] + 600,
        benign_rate=0.05,
        strict=False,
    )


@SLOW
@given(scenarios)
def test_aware_path_never_poisoned(p):
    m = run(build(p))
    assert m.aware_path_poisonings == 0
    assert m.max_failures_at_poisoning <= p["tod"] - 1
    assert m.client_queries == m.answered + m.servfail


@settings(max_examples=10, deadline=None)
@given(scenarios)
def test_runs_are_deterministic(p):
    logs = []
    for _ in range(2):
        buf = io.StringIO()
        rows = run(build(p), buf).as_rows()
        logs.append((buf.getvalue(), rows))
    assert logs[0] == logs[1]


@given(st.integers(1, 10**6), st.integers(0, 40), st.randoms())
def test_guess_space_sample_distinct(size, n, rnd):
    space = GuessSpace(size_override=size)
    n = min(n, size)
    taken = []
    for _ in range(n):
        taken.append(space.sample(random.Random(rnd.random()), taken))
    assert len(set(taken)) == n
