import io
import math

import pytest

from tdwn.attacker import Arrivals, AttackConfig
from tdwn.detector import DetectorConfig
from tdwn.distributions import Constant, ExponentialUpdates, ScriptedUpdates
from tdwn.dns_model import GuessSpace, QType, QuestionKey
from tdwn.resolver import ResolverConfig
from tdwn.sim import AuthServerModel, Scenario, ScenarioError, Simulation, run

GLUE_KEY = ("ns.foo.com.", QType.A)
HOUR = 3600.0


def attack_scenario(seed=0, rounds=5, tod=3, g=None, life=600.0, priority=True, **kw):
    space = GuessSpace(size_override=g) if g else GuessSpace()
    return Scenario(
        resolver=ResolverConfig(detector=DetectorConfig(tod), guess_space=space, priority_cache_enabled=priority),
        attacker=AttackConfig(rounds=rounds, bogus_response_rate=kw.pop("bogus", 400.0)),
        auth=AuthServerModel(ttl_distribution=Constant(life), update_process=kw.pop("updates", ExponentialUpdates(900.0))),
        seed=seed,
        duration=kw.pop("duration", 4 * HOUR),
        benign_rate=kw.pop("benign", 0.5),
        **kw,
    )


def race_scenario(bogus, rounds, tod=3, g=64, seed=0):
    """Deterministic race: the attacker saturates the cap at once and forges at a fixed rate."""
    return Scenario(
        resolver=ResolverConfig(detector=DetectorConfig(tod), guess_space=GuessSpace(size_override=g)),
        attacker=AttackConfig(client_query_rate=20000, bogus_response_rate=bogus, arrivals=Arrivals.DETERMINISTIC, rounds=rounds),
        auth=AuthServerModel(respond_rate=1e6, ttl_distribution=Constant(60.0)),
        seed=seed,
        duration=1e9,
        resolver_send_rate=None,
    )


def traced(scenario):
    log = io.StringIO()
    metrics = run(scenario, log)
    return log.getvalue(), metrics.as_rows()


def test_same_seed_same_log_and_metrics():
    a = traced(attack_scenario(seed=42, g=512))
    b = traced(attack_scenario(seed=42, g=512))
    assert a == b
    assert len(a[0]) > 1000


def test_different_seed_different_log():
    assert traced(attack_scenario(seed=1))[0] != traced(attack_scenario(seed=2))[0]


class Probe(Simulation):
    def __init__(self, scenario):
        super().__init__(scenario)
        self.times = []
        self.delays = []

    def _step(self):
        self.times.append(self._queue[0][0])
        super()._step()

    def _on_upstream_response(self, query):
        self.delays.append(self.now - query.sent_at)
        super()._on_upstream_response(query)

    def _on_validating_response(self, query):
        self.delays.append(self.now - query.sent_at)
        super()._on_validating_response(query)


def test_causality_and_time_order():
    sc = attack_scenario(seed=3, g=256)
    sim = Probe(sc)
    sim.run()
    assert sim.times == sorted(sim.times)
    assert sim.delays and min(sim.delays) >= sc.auth.response_time - 1e-12


def test_conservation_of_client_queries():
    m = run(attack_scenario(seed=5, g=256, benign=2.0, malformed_rate=0.2))
    assert m.client_queries > 1000
    assert m.client_queries == m.answered + m.servfail


def test_invalid_scenario_rejected_before_running():
    with pytest.raises(ScenarioError):
        Simulation(Scenario(duration=-1))
    with pytest.raises(ScenarioError):
        Simulation(Scenario(attacker=AttackConfig(target_domain="bar.com")))


def test_attack_free_day_sends_no_dnssec():
    sc = Scenario(attacker=None, benign_rate=0.5, duration=24 * HOUR, seed=9)
    m = run(sc)
    assert m.client_queries > 30000
    assert m.dnssec_queries_issued == 0


def test_table_defaults_never_poison_aware_path():
    m = run(Scenario(seed=11, duration=24 * HOUR, benign_rate=0.1))
    assert m.ttl_triggered >= 1
    assert m.aware_path_poisonings == 0


def test_snapshot_fig2_then_expiry():
    sc = Scenario(attacker=AttackConfig(rounds=1, bogus_response_rate=400.0), auth=AuthServerModel(ttl_distribution=Constant(36000.0)), seed=4)
    sim = Simulation(sc)
    assert sim.snapshot(0.0)["priority"] == {} and sim.snapshot(0.0)["normal"] == {}
    view = sim.snapshot(60.0)
    assert view["priority"][GLUE_KEY] == "X.X.X.X"
    inserted = sim.resolver.cache.priority[GLUE_KEY].inserted_at
    assert sim.snapshot(inserted + 36000.0)["priority"] == {}


def test_scripted_update_triggers_proactive_update():
    sc = Scenario(
        attacker=AttackConfig(rounds=1, bogus_response_rate=400.0),
        auth=AuthServerModel(ttl_distribution=Constant(36000.0), update_process=ScriptedUpdates((100.0,))),
        seed=4,
        duration=1000.0,
    )
    sim = Simulation(sc)
    sim.schedule_client_query(200.0, QuestionKey("www.foo.com."), ("benign", 0))
    before = sim.snapshot(150.0)
    assert before["priority"][GLUE_KEY] == "X.X.X.X" and before["auth_glue"] == "X.X.0.1"
    m = sim.run()
    entry = sim.resolver.cache.priority[GLUE_KEY]
    assert entry.record.value == "X.X.0.1"
    assert entry.inserted_at > 200.0
    assert m.update_triggered == 1
    assert m.servfail == 0


def test_update_stretches_attack_window():
    life = 10 * HOUR
    sc = Scenario(
        attacker=AttackConfig(rounds=3, bogus_response_rate=400.0),
        auth=AuthServerModel(ttl_distribution=Constant(life), update_process=ScriptedUpdates((5 * HOUR,))),
        seed=4,
        duration=100 * HOUR,
    )
    sim = Simulation(sc)
    sim.schedule_client_query(5 * HOUR + 1, QuestionKey("www.foo.com."), ("benign", 0))
    m = sim.run()
    first_escalated = next(r for r in m.rounds if r.escalated)
    later = [r.started_at for r in m.rounds if r.started_at > first_escalated.ended_at]
    assert later and later[0] >= 5 * HOUR + life


def test_no_priority_cache_means_back_to_back_rounds():
    def gaps(priority):
        m = run(race_scenario(400.0, 30) if priority else _no_cache(race_scenario(400.0, 30)))
        rounds = m.rounds
        return [b.started_at - a.started_at for a, b in zip(rounds, rounds[1:]) if a.escalated]

    with_cache = gaps(True)
    without = gaps(False)
    assert with_cache and without
    assert min(with_cache) >= 60.0
    assert max(without) < 1.0


def _no_cache(sc):
    sc.resolver.priority_cache_enabled = False
    return sc


def test_race_matches_closed_form_h_tod_minus_one():
    """Exactly ToD-1 forgeries beat the genuine answer each round, so h = ToD-1 exactly."""
    m = run(race_scenario(bogus=120.0, rounds=10000))
    n = len(m.rounds)
    freq = sum(r.success for r in m.rounds) / n
    p = 1 - (1 - 20 / 64) ** 2
    assert n == 10000
    assert abs(freq - p) < 3 * math.sqrt(p * (1 - p) / n)
    assert m.aware_path_poisonings == 0
    assert m.max_failures_at_poisoning <= 2


def test_outpacing_attacker_gets_tod_oblivious_guesses():
    # the ToD-th forgery is still judged before escalation; if it misses it is the one that escalates
    m = run(race_scenario(bogus=400.0, rounds=4000, seed=1))
    n = len(m.rounds)
    freq = sum(r.success for r in m.rounds) / n
    p = 1 - (1 - 20 / 64) ** 3
    assert abs(freq - p) < 3 * math.sqrt(p * (1 - p) / n)
    assert max(r.oblivious_attempts for r in m.rounds) == 3
    assert m.max_failures_at_poisoning <= 2
