"""The two-mode resolver.

A transaction starts DNSSEC-oblivious and behaves like a legacy resolver.
Once ToD failure responses hit its question it turns DNSSEC-aware: legacy
answers are held on until a validating response arrives and picks the one
that agrees with it. Validated records go to the priority cache, where they
block conflicting unsigned answers; a transaction stalled by such a conflict
refreshes the validated record once on timeout.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from typing import Callable, Optional

from .detector import DetectorConfig, FailureDetector
from .dns_model import (
    GuessSpace,
    MatchKind,
    OutstandingQuery,
    QType,
    QuestionKey,
    ResourceRecord,
    ResponseMsg,
    Verdict,
    match_response,
    validate,
)
from .priority_cache import Source, TwoTierCache

LogFn = Callable[[float, str, object, str], None]


class Mode(enum.Enum):
    OBLIVIOUS = "oblivious"
    AWARE = "aware"


class ActionKind(enum.Enum):
    ANSWER_FROM_CACHE = "answer-from-cache"
    NEW_OUTSTANDING_QUERY = "new-outstanding-query"
    JOIN_EXISTING_TRANSACTION = "join-existing-transaction"
    REJECTED = "rejected"
    ACCEPTED = "accepted"
    HELD_ON = "held-on"
    COUNTED_AS_FAILURE = "counted-as-failure"
    DISCARDED = "discarded"
    NEEDS_CHAIN_QUERY = "needs-chain-query"
    RESOLVED = "resolved"
    AWAIT_MORE = "await-more"
    SERVFAIL_TO_CLIENT = "servfail-to-client"
    PROACTIVE_UPDATE = "proactive-update"


@dataclass(frozen=True)
class ClientReply:
    client_id: object
    question: QuestionKey
    records: Optional[tuple[ResourceRecord, ...]]  # None means SERVFAIL


@dataclass
class Action:
    """What the resolver decided, plus the side effects the engine must carry out."""

    kind: ActionKind
    question: Optional[QuestionKey] = None
    records: tuple[ResourceRecord, ...] = ()
    escalated: bool = False
    chain_question: Optional[QuestionKey] = None
    upstream: list[OutstandingQuery] = field(default_factory=list)
    replies: list[ClientReply] = field(default_factory=list)
    cached: list[ResourceRecord] = field(default_factory=list)
    timer: Optional[tuple[QuestionKey, int, float]] = None
    # transaction state at decision time, for the safety observer
    mode: Optional[Mode] = None
    blocked: bool = False
    failures: int = 0
    also: list["Action"] = field(default_factory=list)

    def walk(self):
        yield self
        for other in self.also:
            yield from other.walk()


@dataclass
class ResolverConfig:
    max_identical_outstanding: int = 20
    transaction_timeout: float = 2.0
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    priority_cache_enabled: bool = True
    max_transactions: Optional[int] = None
    guess_space: GuessSpace = field(default_factory=GuessSpace)

    def __post_init__(self):
        if self.max_identical_outstanding < 1:
            raise ValueError("max_identical_outstanding must be >= 1")
        if self.transaction_timeout <= 0:
            raise ValueError("transaction_timeout must be positive")


@dataclass
class ResolutionTransaction:
    question: QuestionKey
    serial: int
    deadline: float
    mode: Mode = Mode.OBLIVIOUS
    outstanding: list[OutstandingQuery] = field(default_factory=list)
    holdon: list[ResponseMsg] = field(default_factory=list)
    clients: list = field(default_factory=list)
    validating_request_sent: bool = False
    conflict_keys: set = field(default_factory=set)
    proactive_attempted: bool = False
    trigger: Optional[str] = None  # "tod" or "conflict"
    dnssec_query: Optional[OutstandingQuery] = None
    chain_question: Optional[QuestionKey] = None
    validation: Optional[dict] = None
    validated: Optional[dict] = None

    @property
    def conflict_pending(self) -> bool:
        return bool(self.conflict_keys)


class TDWNResolver:
    def __init__(self, config: ResolverConfig | None = None, rng: random.Random | None = None, log: LogFn | None = None):
        self.config = config or ResolverConfig()
        self.rng = rng or random.Random(0)
        self.log = log or _no_log
        self.cache = TwoTierCache()
        self.detector = FailureDetector(self.config.detector)
        self.transactions: dict[QuestionKey, ResolutionTransaction] = {}
        self._chains: dict[QuestionKey, QuestionKey] = {}
        self._serial = 0
        self.dnssec_queries_sent = 0

    # -- helpers ---------------------------------------------------------

    def _state(self, tx: ResolutionTransaction, now: float, **kw) -> dict:
        return dict(
            question=tx.question,
            mode=tx.mode,
            blocked=self._blocked(tx, now),
            failures=self.detector.count(tx.question),
            **kw,
        )

    def _blocked(self, tx: ResolutionTransaction, now: float) -> bool:
        return any(self.cache.priority_expiry(k, now) is not None for k in tx.conflict_keys)

    def _query(self, tx: ResolutionTransaction, question: QuestionKey, now: float, dnssec: bool) -> OutstandingQuery:
        taken = [q.identity for q in tx.outstanding]
        if tx.dnssec_query is not None:
            taken.append(tx.dnssec_query.identity)
        identity = self.config.guess_space.sample(self.rng, taken)
        query = OutstandingQuery(question, identity, now, dnssec)
        if dnssec:
            tx.dnssec_query = query
            tx.validating_request_sent = True
            self.dnssec_queries_sent += 1
            self.log(now, "dnssec-query", question, tx.trigger or "")
        else:
            tx.outstanding.append(query)
        return query

    def _has_room(self, tx: ResolutionTransaction) -> bool:
        # tiny guess spaces: keep one identity free for the validating query
        n = len(tx.outstanding)
        return n < self.config.max_identical_outstanding and n + 1 < self.config.guess_space.size

    def _close(self, tx: ResolutionTransaction) -> None:
        self.detector.close(tx.question)
        if tx.chain_question is not None:
            self._chains.pop(tx.chain_question, None)
        self.transactions.pop(tx.question, None)

    def _finish(self, tx: ResolutionTransaction, records: tuple[ResourceRecord, ...]) -> list[ClientReply]:
        replies = [ClientReply(c, tx.question, records) for c in tx.clients]
        self._close(tx)
        return replies

    # -- client side -----------------------------------------------------

    def on_client_query(self, q: QuestionKey, now: float, client_id: object = None) -> Action:
        rec = self.cache.lookup((q.qname, q.qtype), now)
        if rec is not None:
            self.log(now, "cache-answer", q, rec.value)
            return Action(ActionKind.ANSWER_FROM_CACHE, q, (rec,), replies=[ClientReply(client_id, q, (rec,))])

        tx = self.transactions.get(q)
        if tx is not None:
            tx.clients.append(client_id)
            if self._has_room(tx):
                query = self._query(tx, q, now, dnssec=False)
                return Action(ActionKind.NEW_OUTSTANDING_QUERY, upstream=[query], **self._state(tx, now))
            return Action(ActionKind.JOIN_EXISTING_TRANSACTION, **self._state(tx, now))

        limit = self.config.max_transactions
        if limit is not None and len(self.transactions) >= limit:
            self.log(now, "reject", q, "transaction-table-full")
            return Action(ActionKind.REJECTED, q, replies=[ClientReply(client_id, q, None)])

        self._serial += 1
        tx = ResolutionTransaction(q, self._serial, now + self.config.transaction_timeout, clients=[client_id])
        self.transactions[q] = tx
        self.detector.open(q, now)
        query = self._query(tx, q, now, dnssec=False)
        return Action(
            ActionKind.NEW_OUTSTANDING_QUERY,
            upstream=[query],
            timer=(q, tx.serial, tx.deadline),
            **self._state(tx, now),
        )

    # -- legacy responses ------------------------------------------------

    def on_response(self, resp: ResponseMsg, now: float) -> Action:
        if resp.is_validating:
            return self.on_validating_response(resp, now)
        tx = self.transactions.get(resp.question)
        if tx is None:
            self.log(now, "discard", resp.question, "unrelated")
            return Action(ActionKind.DISCARDED, resp.question)

        match = match_response(resp, tx.outstanding)
        if match.kind is MatchKind.UNRELATED:
            self.log(now, "discard", resp.question, "unrelated")
            return Action(ActionKind.DISCARDED, **self._state(tx, now))

        if match.kind is MatchKind.FAILURE_ATTEMPT:
            state = self._state(tx, now)
            count = self.detector.record_failure(tx.question, now)
            self.log(now, "failure", tx.question, str(count))
            upstream = []
            escalated = False
            if tx.mode is Mode.OBLIVIOUS and self.detector.should_escalate(tx.question):
                tx.mode = Mode.AWARE
                tx.trigger = "tod"
                escalated = True
                self.log(now, "mode-transition", tx.question, "aware:tod")
                if tx.dnssec_query is None and tx.chain_question is None:
                    upstream.append(self._query(tx, tx.question, now, dnssec=True))
            return Action(ActionKind.COUNTED_AS_FAILURE, escalated=escalated, upstream=upstream, **state)

        # full identity match
        state = self._state(tx, now)
        if tx.mode is Mode.AWARE:
            if tx.validated is None:
                tx.holdon.append(resp)
                self.log(now, "hold-on", tx.question, "awaiting-validation")
                return Action(ActionKind.HELD_ON, **state)
            if _agrees(resp, tx.validated):
                self.log(now, "accept", tx.question, "validated")
                return Action(ActionKind.ACCEPTED, records=resp.records, replies=self._finish(tx, resp.records), **state)
            self.log(now, "discard", tx.question, "disagrees-with-validating")
            return Action(ActionKind.DISCARDED, **state)

        consistency = self.cache.check_consistency(resp, now)
        if not consistency.ok:
            tx.conflict_keys.update(consistency.conflicts)
            tx.holdon.append(resp)
            self.log(now, "hold-on", tx.question, "priority-conflict")
            state["blocked"] = True
            return Action(ActionKind.HELD_ON, **state)
        return self._accept_oblivious(tx, resp, now, state)

    def _accept_oblivious(self, tx: ResolutionTransaction, resp: ResponseMsg, now: float, state: dict) -> Action:
        cached = []
        for rec in resp.records:
            # consistency was checked just before, so this cannot be blocked
            self.cache.insert_normal(rec, now)
            cached.append(rec)
        self.log(now, "accept", tx.question, "oblivious")
        return Action(ActionKind.ACCEPTED, records=resp.records, replies=self._finish(tx, resp.records), cached=cached, **state)

    # -- validating responses --------------------------------------------

    def on_validating_response(self, resp: ResponseMsg, now: float) -> Action:
        parent = self._chains.get(resp.question)
        is_chain = parent is not None
        tx = self.transactions.get(parent if is_chain else resp.question)
        if tx is None or tx.dnssec_query is None or tx.dnssec_query.identity != resp.identity or tx.dnssec_query.question != resp.question:
            self.log(now, "discard", resp.question, "stray-validating")
            return Action(ActionKind.DISCARDED, resp.question)
        if tx.mode is not Mode.AWARE:
            raise RuntimeError("validating response for a transaction that is not DNSSEC-aware")
        state = self._state(tx, now)
        tx.dnssec_query = None

        result = validate(resp.records)
        if result.verdict is Verdict.BOGUS:
            self.log(now, "validation", tx.question, "bogus")
            retry = self._query(tx, resp.question, now, dnssec=True)
            return Action(ActionKind.DISCARDED, upstream=[retry], **state)

        if is_chain:
            self._chains.pop(resp.question, None)
            tx.chain_question = None
            for rec in resp.records:
                if rec.key in tx.validation:
                    tx.validation[rec.key] = rec
        else:
            tx.validation = {rec.key: rec for rec in resp.records}

        missing = [k for k, rec in tx.validation.items() if not rec.signed]
        if missing:
            owner, rtype = missing[0]
            chain_q = QuestionKey(owner, rtype)
            tx.chain_question = chain_q
            self._chains[chain_q] = tx.question
            self.log(now, "validation", tx.question, f"needs-chain:{chain_q}")
            query = self._query(tx, chain_q, now, dnssec=True)
            return Action(ActionKind.NEEDS_CHAIN_QUERY, chain_question=chain_q, upstream=[query], **state)

        self.log(now, "validation", tx.question, "valid")
        tx.validated = dict(tx.validation)
        cached = []
        also = []
        if self.config.priority_cache_enabled:
            source = Source.PROACTIVE_UPDATE if tx.trigger == "conflict" else Source.FRESH_VALIDATING
            for rec in tx.validated.values():
                self.cache.insert_validated(rec, now, source)
                cached.append(rec)
            also = self._recheck_blocked(now, exclude=tx)

        held, tx.holdon = tx.holdon, []
        for candidate in held:
            if _agrees(candidate, tx.validated):
                self.log(now, "resolved", tx.question, "holdon-match")
                discarded = len(held) - 1
                if discarded:
                    self.log(now, "discard", tx.question, f"holdon:{discarded}")
                if not self.config.priority_cache_enabled:
                    for rec in candidate.records:
                        self.cache.insert_normal(rec, now)
                        cached.append(rec)
                return Action(
                    ActionKind.RESOLVED,
                    records=candidate.records,
                    replies=self._finish(tx, candidate.records),
                    cached=cached,
                    also=also,
                    **state,
                )
        if held:
            self.log(now, "discard", tx.question, f"holdon:{len(held)}")
        return Action(ActionKind.AWAIT_MORE, cached=cached, also=also, **state)

    def _recheck_blocked(self, now: float, exclude: ResolutionTransaction) -> list[Action]:
        """Release stalled transactions whose held answers now agree with the refreshed cache."""
        released = []
        for tx in list(self.transactions.values()):
            if tx is exclude or tx.mode is not Mode.OBLIVIOUS or not tx.conflict_pending:
                continue
            for candidate in tx.holdon:
                if self.cache.check_consistency(candidate, now).ok:
                    tx.conflict_keys.clear()
                    self.log(now, "conflict-cleared", tx.question, "")
                    released.append(self._accept_oblivious(tx, candidate, now, self._state(tx, now)))
                    break
        return released

    # -- timers ----------------------------------------------------------

    def on_timeout(self, tx: ResolutionTransaction, now: float) -> Action:
        if now < tx.deadline:
            raise ValueError("timeout fired before the transaction deadline")
        state = self._state(tx, now)
        if (
            tx.conflict_pending
            and tx.mode is Mode.OBLIVIOUS
            and not tx.proactive_attempted
            and self.config.priority_cache_enabled
        ):
            tx.proactive_attempted = True
            tx.mode = Mode.AWARE
            tx.trigger = "conflict"
            tx.deadline = now + self.config.transaction_timeout
            self.log(now, "mode-transition", tx.question, "aware:conflict")
            query = self._query(tx, tx.question, now, dnssec=True)
            return Action(
                ActionKind.PROACTIVE_UPDATE,
                upstream=[query],
                timer=(tx.question, tx.serial, tx.deadline),
                **state,
            )
        self.log(now, "servfail", tx.question, "timeout")
        replies = [ClientReply(c, tx.question, None) for c in tx.clients]
        self._close(tx)
        return Action(ActionKind.SERVFAIL_TO_CLIENT, replies=replies, **state)

    def snapshot(self) -> dict:
        view = self.cache.snapshot()
        view["transactions"] = {
            str(q): {
                "mode": tx.mode.value,
                "holdon": len(tx.holdon),
                "outstanding": len(tx.outstanding),
                "failures": self.detector.count(q),
                "blocked": tx.conflict_pending,
            }
            for q, tx in sorted(self.transactions.items(), key=lambda kv: str(kv[0]))
        }
        return view


def _agrees(resp: ResponseMsg, validated: dict) -> bool:
    """Every record in `resp` must appear in the validated set with the same value."""
    if not resp.records:
        return False
    for rec in resp.records:
        trusted = validated.get(rec.key)
        if trusted is None or trusted.value != rec.value:
            return False
    return True


def _no_log(*_args) -> None:
    pass


__all__ = [
    "Action",
    "ActionKind",
    "ClientReply",
    "Mode",
    "QType",
    "ResolutionTransaction",
    "ResolverConfig",
    "TDWNResolver",
]
