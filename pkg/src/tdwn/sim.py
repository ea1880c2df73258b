"""Deterministic discrete-event simulation of a resolver under attack.

One resolver, one simulated zone with its authoritative servers, benign
clients, and an optional attacker. Every random source draws from its own
stream derived from the scenario seed, so the same scenario always yields
the same event log.
"""

from __future__ import annotations

import enum
import heapq
import itertools
import math
import random
from dataclasses import dataclass, field
from typing import Optional, TextIO

from .attacker import (
    AttackConfig,
    AttackState,
    effective_outstanding,
    emit_forgeries,
    next_round_qname,
    schedule_next_round,
)
from .distributions import (
    Constant,
    ExponentialUpdates,
    NoUpdates,
    ScriptedUpdates,
    TtlDistribution,
    UpdateProcess,
)
from .dns_model import (
    GuessSpace,
    OutstandingQuery,
    QType,
    QuestionKey,
    ResourceRecord,
    ResponseMsg,
    is_poisoned,
    normalize_qname,
)
from .resolver import Action, ActionKind, Mode, ResolverConfig, TDWNResolver


# -- authoritative side ----------------------------------------------------


@dataclass
class AuthServerModel:
    target_domain: str = "foo.com."
    glue_value: str = "X.X.X.X"
    answer_value: str = "A.A.A.A"
    response_time: float = 0.02
    respond_rate: float = 100.0
    outstanding_cap: int = 1000
    update_process: UpdateProcess = field(default_factory=NoUpdates)
    ttl_distribution: TtlDistribution = field(default_factory=lambda: Constant(36000.0))
    normal_ttl: float = 300.0
    chain_depth: int = 1

    def __post_init__(self):
        self.target_domain = normalize_qname(self.target_domain)
        if self.response_time <= 0 or self.respond_rate <= 0:
            raise ValueError("response_time and respond_rate must be positive")
        if self.outstanding_cap < 1:
            raise ValueError("outstanding_cap must be >= 1")
        if self.normal_ttl <= 0:
            raise ValueError("normal_ttl must be positive")
        if not 0 <= self.chain_depth <= len(self.chain_links()):
            raise ValueError(f"chain_depth must be in [0, {len(self.chain_links())}]")

    @property
    def glue_owner(self) -> str:
        return "ns." + self.target_domain

    def chain_links(self) -> list[tuple[str, QType]]:
        """Records whose signatures a first validating response may lack, nearest first."""
        links = [(self.glue_owner, QType.A)]
        labels = self.target_domain.rstrip(".").split(".")
        for i in range(len(labels)):
            links.append((".".join(labels[i:]) + ".", QType.DNSKEY))
        links.append((".", QType.DNSKEY))
        return links


class AuthServer:
    """The zone's authoritative servers: rate-limited, capped, signing on request."""

    def __init__(self, model: AuthServerModel, rng: random.Random):
        self.model = model
        self.glue_value = model.glue_value
        self.version = 0
        self.in_flight = 0
        self.dropped = 0
        self._last_departure = -math.inf
        self._ttl = model.ttl_distribution.sampler(rng)

    def receive(self, query: OutstandingQuery, now: float) -> Optional[float]:
        """Departure time of the answer, or None if the query is dropped."""
        if self.in_flight >= self.model.outstanding_cap:
            self.dropped += 1
            return None
        self.in_flight += 1
        at = max(now + self.model.response_time, self._last_departure + 1.0 / self.model.respond_rate)
        self._last_departure = at
        return at

    def update(self) -> str:
        self.version += 1
        v = self.version
        self.glue_value = f"X.X.{v // 256 % 256}.{v % 256}"
        return self.glue_value

    def _record(self, owner: str, rtype: QType, ttl: float, signed: bool) -> ResourceRecord:
        if rtype is QType.DNSKEY:
            value = f"key:{owner}"
        elif owner == self.model.glue_owner:
            value = self.glue_value
        else:
            value = self.model.answer_value
        return ResourceRecord(owner, rtype, value, ttl, signed=signed, authentic=True)

    def respond(self, query: OutstandingQuery) -> ResponseMsg:
        self.in_flight -= 1
        q = query.question
        glue = (self.model.glue_owner, QType.A)
        in_zone = q.qname == self.model.target_domain or q.qname.endswith("." + self.model.target_domain)
        if not query.dnssec:
            ttl = self.model.normal_ttl
            records = [self._record(q.qname, q.qtype, ttl, False)]
            if in_zone and (q.qname, q.qtype) != glue:
                records.append(self._record(*glue, ttl, False))
            return ResponseMsg(q, query.identity, tuple(records))

        ttl = self._ttl()
        links = self.model.chain_links()
        if (q.qname, q.qtype) in links[: self.model.chain_depth]:
            # follow-up chain query: the link itself, signed
            records = [self._record(q.qname, q.qtype, ttl, True)]
            return ResponseMsg(q, query.identity, tuple(records), is_validating=True)
        missing = set(links[: self.model.chain_depth])
        records = [self._record(q.qname, q.qtype, ttl, (q.qname, q.qtype) not in missing)]
        if in_zone:
            if (q.qname, q.qtype) != glue:
                records.append(self._record(*glue, ttl, glue not in missing))
            for owner, rtype in links[1 : self.model.chain_depth]:
                records.append(self._record(owner, rtype, ttl, False))
        return ResponseMsg(q, query.identity, tuple(records), is_validating=True)


# -- scenario & metrics ----------------------------------------------------


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    resolver: ResolverConfig = field(default_factory=ResolverConfig)
    attacker: Optional[AttackConfig] = field(default_factory=AttackConfig)
    auth: AuthServerModel = field(default_factory=AuthServerModel)
    seed: int = 0
    duration: float = 86400.0
    resolver_send_rate: Optional[float] = 100.0
    benign_rate: float = 0.0
    benign_names: int = 1000
    malformed_rate: float = 0.0
    strict: bool = True

    def validate(self) -> None:
        if not 0 <= self.seed < 2**64:
            raise ScenarioError("seed must be a 64-bit unsigned integer")
        if self.duration <= 0:
            raise ScenarioError("duration must be positive")
        if self.resolver_send_rate is not None and self.resolver_send_rate <= 0:
            raise ScenarioError("resolver_send_rate must be positive")
        if self.benign_rate < 0 or self.malformed_rate < 0:
            raise ScenarioError("rates must be >= 0")
        if self.benign_names < 1:
            raise ScenarioError("benign_names must be >= 1")
        if self.attacker is not None and self.attacker.target_domain != self.auth.target_domain:
            raise ScenarioError("attacker target must be the simulated zone")


@dataclass
class RoundOutcome:
    round: int
    qname: str
    started_at: float
    ended_at: float = math.nan
    forgeries: int = 0
    oblivious_attempts: int = 0
    escalated: bool = False
    success: bool = False
    answered: bool = False


@dataclass
class Metrics:
    client_queries: int = 0
    answered: int = 0
    servfail: int = 0
    upstream_queries: int = 0
    dnssec_queries_issued: int = 0
    dnssec_query_times: list = field(default_factory=list)
    dnssec_transaction_times: list = field(default_factory=list)
    ttl_triggered: int = 0
    update_triggered: int = 0
    auth_updates: int = 0
    auth_dropped: int = 0
    poisoning_attempts: int = 0
    poisoning_successes: int = 0
    aware_path_poisonings: int = 0
    oblivious_poisonings: int = 0
    max_failures_at_poisoning: int = 0
    poisoned_cache_answers: int = 0
    first_success_at: float = math.nan
    rounds: list = field(default_factory=list)

    @property
    def dnssec_query_intervals(self) -> list[float]:
        times = self.dnssec_transaction_times
        return [b - a for a, b in zip(times, times[1:])]

    def as_rows(self) -> list[tuple[str, str]]:
        intervals = self.dnssec_query_intervals
        mean_interval = sum(intervals) / len(intervals) if intervals else math.nan
        succ_rounds = sum(r.success for r in self.rounds)
        return [
            ("client_queries", str(self.client_queries)),
            ("answered", str(self.answered)),
            ("servfail", str(self.servfail)),
            ("upstream_queries", str(self.upstream_queries)),
            ("dnssec_queries_issued", str(self.dnssec_queries_issued)),
            ("dnssec_transactions", str(len(self.dnssec_transaction_times))),
            ("ttl_triggered", str(self.ttl_triggered)),
            ("update_triggered", str(self.update_triggered)),
            ("dnssec_query_interval_mean", _fmt(mean_interval)),
            ("dnssec_transaction_times", ";".join(_fmt(t) for t in self.dnssec_transaction_times)),
            ("auth_updates", str(self.auth_updates)),
            ("auth_dropped", str(self.auth_dropped)),
            ("poisoning_attempts", str(self.poisoning_attempts)),
            ("poisoning_successes", str(self.poisoning_successes)),
            ("poisoning_successes_aware_path", str(self.aware_path_poisonings)),
            ("poisoning_successes_oblivious_path", str(self.oblivious_poisonings)),
            ("max_failures_at_poisoning", str(self.max_failures_at_poisoning)),
            ("poisoned_cache_answers", str(self.poisoned_cache_answers)),
            ("first_success_at", _fmt(self.first_success_at)),
            ("rounds", str(len(self.rounds))),
            ("rounds_succeeded", str(succ_rounds)),
            ("rounds_escalated", str(sum(r.escalated for r in self.rounds))),
        ]


def _fmt(x: float) -> str:
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return repr(float(x))


class SafetyViolation(AssertionError):
    """A forged record got through while the transaction was defended."""


class EventKind(enum.Enum):
    CLIENT_QUERY = "ClientQuery"
    QUERY_SENT = "QuerySent"
    UPSTREAM_RESPONSE = "UpstreamResponse"
    FORGED_RESPONSE = "ForgedResponse"
    VALIDATING_RESPONSE = "ValidatingResponse"
    TIMEOUT = "Timeout"
    AUTH_UPDATE = "AuthUpdate"
    TTL_EXPIRY = "TtlExpiry"
    ATTACK_ROUND = "AttackRound"
    BENIGN_ARRIVAL = "BenignArrival"
    MALFORMED = "Malformed"


class Simulation:
    def __init__(self, scenario: Scenario, log: TextIO | None = None):
        scenario.validate()
        self.scenario = scenario
        self.now = 0.0
        self._queue: list = []
        self._seq = itertools.count()
        self._log_out = log
        self.metrics = Metrics()
        seed = scenario.seed
        self.rng = {name: random.Random(f"{seed}/{name}") for name in ("resolver", "attacker", "auth", "updates", "benign", "malformed")}
        self.resolver = TDWNResolver(scenario.resolver, self.rng["resolver"], self._log if log else None)
        self.auth = AuthServer(scenario.auth, self.rng["auth"])
        self.space: GuessSpace = scenario.resolver.guess_space
        self._last_send = -math.inf
        self._glue_key = (scenario.auth.glue_owner, QType.A)

        self.attack = AttackState()
        self._round: Optional[RoundOutcome] = None
        self._forgeries = None
        if scenario.attacker is not None and scenario.attacker.rounds != 0:
            self._push(0.0, EventKind.ATTACK_ROUND, None)
        if scenario.benign_rate > 0:
            self._push(self.rng["benign"].expovariate(scenario.benign_rate), EventKind.BENIGN_ARRIVAL, None)
        if scenario.malformed_rate > 0:
            self._push(self.rng["malformed"].expovariate(scenario.malformed_rate), EventKind.MALFORMED, None)
        self._schedule_first_update()

    # -- queue -----------------------------------------------------------

    def _push(self, at: float, kind: EventKind, payload) -> None:
        heapq.heappush(self._queue, (at, next(self._seq), kind, payload))

    def _log(self, t: float, kind: str, question, verdict: str) -> None:
        self._log_out.write(f"{t:.6f}\t{kind}\t{question if question is not None else '-'}\t{verdict}\n")

    def schedule_client_query(self, at: float, question: QuestionKey, client_id=("scripted", 0)) -> None:
        """Inject one client query; used for scripted workloads and tests."""
        if at < self.now:
            raise ValueError("cannot schedule in the past")
        self._push(at, EventKind.CLIENT_QUERY, (question, client_id))

    def run_until(self, t: float) -> None:
        while self._queue and self._queue[0][0] <= t:
            self._step()
        self.now = max(self.now, t)

    def run(self) -> Metrics:
        while self._queue:
            self._step()
        self.metrics.auth_dropped = self.auth.dropped
        if self._round is not None:
            self.metrics.rounds.append(self._round)
            self._round = None
        return self.metrics

    def snapshot(self, at: float) -> dict:
        self.run_until(at)
        view = self.resolver.snapshot()
        view["time"] = self.now
        view["auth_glue"] = self.auth.glue_value
        return view

    def _step(self) -> None:
        at, _, kind, payload = heapq.heappop(self._queue)
        self.now = at
        getattr(self, "_on_" + kind.name.lower())(payload)

    # -- sources ---------------------------------------------------------

    def _schedule_first_update(self) -> None:
        proc = self.scenario.auth.update_process
        if isinstance(proc, ExponentialUpdates):
            at = self.rng["updates"].expovariate(1.0 / proc.mean)
            if at <= self.scenario.duration:
                self._push(at, EventKind.AUTH_UPDATE, None)
        elif isinstance(proc, ScriptedUpdates):
            for t in proc.times:
                if t <= self.scenario.duration:
                    self._push(t, EventKind.AUTH_UPDATE, "scripted")

    def _on_auth_update(self, payload) -> None:
        value = self.auth.update()
        self.metrics.auth_updates += 1
        if self._log_out:
            self._log(self.now, "AuthUpdate", self.scenario.auth.glue_owner, value)
        proc = self.scenario.auth.update_process
        if isinstance(proc, ExponentialUpdates):
            at = self.now + self.rng["updates"].expovariate(1.0 / proc.mean)
            if at <= self.scenario.duration:
                self._push(at, EventKind.AUTH_UPDATE, None)

    def _on_benign_arrival(self, payload) -> None:
        rng = self.rng["benign"]
        name = f"w{rng.randrange(self.scenario.benign_names)}.{self.scenario.auth.target_domain}"
        self._client_query(QuestionKey(name), ("benign", self.metrics.client_queries))
        at = self.now + rng.expovariate(self.scenario.benign_rate)
        if at <= self.scenario.duration:
            self._push(at, EventKind.BENIGN_ARRIVAL, None)

    def _on_malformed(self, payload) -> None:
        rng = self.rng["malformed"]
        txs = [tx for tx in self.resolver.transactions.values() if tx.outstanding]
        if txs:
            tx = txs[0]
            identity = self.space.sample(rng, [q.identity for q in tx.outstanding])
            resp = ResponseMsg(tx.question, identity, (), is_error=True)
            if self._log_out:
                self._log(self.now, "Malformed", tx.question, "")
            self._apply(self.resolver.on_response(resp, self.now))
        at = self.now + rng.expovariate(self.scenario.malformed_rate)
        if at <= self.scenario.duration:
            self._push(at, EventKind.MALFORMED, None)

    def _on_client_query(self, payload) -> None:
        question, client_id = payload
        self._client_query(question, client_id)

    def _client_query(self, question: QuestionKey, client_id) -> None:
        self.metrics.client_queries += 1
        if self._log_out:
            self._log(self.now, "ClientQuery", question, str(client_id[0]))
        self._apply(self.resolver.on_client_query(question, self.now, client_id))

    # -- attacker --------------------------------------------------------

    def _on_attack_round(self, payload) -> None:
        cfg = self.scenario.attacker
        if self.now > self.scenario.duration:
            return
        if cfg.wait_for_expiry:
            expiry = self.resolver.cache.priority_expiry(self._glue_key, self.now)
            if expiry is not None:
                # validated target record renewed meanwhile: keep waiting
                if expiry <= self.scenario.duration:
                    self._push(expiry, EventKind.ATTACK_ROUND, None)
                return
        st = self.attack
        st.current_round += 1
        st.current_qname = next_round_qname(cfg, self.rng["attacker"], st.issued)
        st.attempts_this_round = 0
        st.round_started_at = self.now
        st.active = True
        self._round = RoundOutcome(st.current_round, st.current_qname, self.now)
        if self._log_out:
            self._log(self.now, "AttackRound", st.current_qname, str(st.current_round))

        # D identical queries: the smaller of the resolver cap and one response time of sending
        burst = effective_outstanding(cfg, self.scenario.resolver.max_identical_outstanding, self.scenario.auth.response_time)
        question = QuestionKey(st.current_qname)
        for k in range(burst):
            self._push(self.now + k / cfg.client_query_rate, EventKind.CLIENT_QUERY, (question, ("attacker", st.current_round)))
        # forging starts with the first query, not after the burst
        self._forgeries = emit_forgeries(st, cfg, self.now, self.space, self.rng["attacker"])
        self._next_forgery()

    def _next_forgery(self) -> None:
        at, resp = next(self._forgeries)
        self._push(at, EventKind.FORGED_RESPONSE, (self.attack.current_round, resp))

    def _on_forged_response(self, payload) -> None:
        round_no, resp = payload
        if not self.attack.active or round_no != self.attack.current_round:
            return
        self.metrics.poisoning_attempts += 1
        rnd = self._round
        rnd.forgeries += 1
        if self._log_out:
            self._log(self.now, "ForgedResponse", resp.question, f"round:{round_no}")
        action = self.resolver.on_response(resp, self.now)
        if action.mode is Mode.OBLIVIOUS and action.kind is not ActionKind.DISCARDED:
            rnd.oblivious_attempts += 1
        self._apply(action)
        if self.attack.active and round_no == self.attack.current_round:
            self._next_forgery()

    def _attacker_reply(self, round_no: int, records) -> None:
        st = self.attack
        if not st.active or round_no != st.current_round:
            return
        st.active = False
        self._forgeries = None
        rnd = self._round
        rnd.ended_at = self.now
        rnd.answered = records is not None
        rnd.success = records is not None and is_poisoned(records)
        if rnd.success:
            st.successes += 1
        self.metrics.rounds.append(rnd)
        self._round = None
        cfg = self.scenario.attacker
        if cfg.rounds is not None and st.current_round >= cfg.rounds:
            return
        expiry = self.resolver.cache.priority_expiry(self._glue_key, self.now) if cfg.wait_for_expiry else None
        at = schedule_next_round(st, expiry, self.now)
        if at <= self.scenario.duration:
            self._push(at, EventKind.ATTACK_ROUND, None)

    # -- network ---------------------------------------------------------

    def _send(self, query: OutstandingQuery) -> None:
        at = self.now
        rate = self.scenario.resolver_send_rate
        if rate is not None:
            at = max(at, self._last_send + 1.0 / rate)
            self._last_send = at
        if at == self.now:
            self._on_query_sent(query)
        else:
            self._push(at, EventKind.QUERY_SENT, query)

    def _on_query_sent(self, query: OutstandingQuery) -> None:
        self.metrics.upstream_queries += 1
        if query.dnssec:
            self.metrics.dnssec_queries_issued += 1
            self.metrics.dnssec_query_times.append(self.now)
        departure = self.auth.receive(query, self.now)
        if departure is None:
            if self._log_out:
                self._log(self.now, "Dropped", query.question, "auth-cap")
            return
        kind = EventKind.VALIDATING_RESPONSE if query.dnssec else EventKind.UPSTREAM_RESPONSE
        self._push(departure, kind, query)

    def _on_upstream_response(self, query: OutstandingQuery) -> None:
        resp = self.auth.respond(query)
        if self._log_out:
            self._log(self.now, "UpstreamResponse", resp.question, resp.records[-1].value)
        self._apply(self.resolver.on_response(resp, self.now))

    def _on_validating_response(self, query: OutstandingQuery) -> None:
        resp = self.auth.respond(query)
        if self._log_out:
            self._log(self.now, "ValidatingResponse", resp.question, "")
        self._apply(self.resolver.on_validating_response(resp, self.now))

    def _on_timeout(self, payload) -> None:
        question, serial = payload
        tx = self.resolver.transactions.get(question)
        if tx is None or tx.serial != serial or self.now < tx.deadline:
            return
        if self._log_out:
            self._log(self.now, "Timeout", question, "")
        self._apply(self.resolver.on_timeout(tx, self.now))

    def _on_ttl_expiry(self, payload) -> None:
        evicted = self.resolver.cache.expire(self.now)
        if self._log_out:
            self._log(self.now, "TtlExpiry", payload, str(evicted))

    # -- bookkeeping -----------------------------------------------------

    def _apply(self, action: Action) -> None:
        for act in action.walk():
            self._observe(act)
            if act.kind is ActionKind.COUNTED_AS_FAILURE and act.escalated:
                self.metrics.ttl_triggered += 1
                self.metrics.dnssec_transaction_times.append(self.now)
                if self._round is not None and act.question is not None and act.question.qname == self._round.qname:
                    self._round.escalated = True
            elif act.kind is ActionKind.PROACTIVE_UPDATE:
                self.metrics.update_triggered += 1
                self.metrics.dnssec_transaction_times.append(self.now)
            if act.timer is not None:
                question, serial, at = act.timer
                self._push(at, EventKind.TIMEOUT, (question, serial))
            for rec in act.cached:
                if rec.signed:
                    at = self.now + rec.ttl
                    if at <= self.scenario.duration:
                        self._push(at, EventKind.TTL_EXPIRY, f"{rec.owner}/{rec.rtype.value}")
            for query in act.upstream:
                self._send(query)
        for act in action.walk():
            for reply in act.replies:
                if reply.records is None:
                    self.metrics.servfail += 1
                else:
                    self.metrics.answered += 1
                if isinstance(reply.client_id, tuple) and reply.client_id[0] == "attacker":
                    self._attacker_reply(reply.client_id[1], reply.records)

    def _observe(self, act: Action) -> None:
        """Safety observer. Reads ground truth the resolver never sees."""
        poisoned = any(r.records and is_poisoned(r.records) for r in act.replies) or is_poisoned(act.cached)
        if not poisoned:
            return
        if act.kind is ActionKind.ANSWER_FROM_CACHE:
            self.metrics.poisoned_cache_answers += 1
            return
        self.metrics.poisoning_successes += 1
        if math.isnan(self.metrics.first_success_at):
            self.metrics.first_success_at = self.now
        if act.mode is Mode.AWARE or act.blocked:
            self.metrics.aware_path_poisonings += 1
            if self._log_out:
                self._log(self.now, "Poisoned", act.question, "aware-path")
            if self.scenario.strict:
                raise SafetyViolation(f"forged record accepted on the defended path at t={self.now} for {act.question}")
        else:
            self.metrics.oblivious_poisonings += 1
            self.metrics.max_failures_at_poisoning = max(self.metrics.max_failures_at_poisoning, act.failures)
            if self._log_out:
                self._log(self.now, "Poisoned", act.question, f"oblivious:failures={act.failures}")


def run(scenario: Scenario, log: TextIO | None = None) -> Metrics:
    return Simulation(scenario, log).run()
