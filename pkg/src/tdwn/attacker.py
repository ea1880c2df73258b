"""Off-path Kaminsky-style attacker.

Each round queries a fresh random subdomain of the target so the resolver
must go upstream, then sprays forged referrals that try to plant
``ns.<target> A <forged_value>`` by guessing the query identity.
"""

from __future__ import annotations

import enum
import math
import random
import string
from dataclasses import dataclass, field
from typing import Iterator, Optional

from .dns_model import GuessSpace, QType, QuestionKey, ResourceRecord, ResponseMsg, normalize_qname

LABEL_ALPHABET = string.ascii_lowercase + string.digits
FORGED_TTL = 86400.0


class GuessStrategy(enum.Enum):
    UNIFORM_RANDOM = "uniform"
    SEQUENTIAL_SWEEP = "sequential"


class Arrivals(enum.Enum):
    POISSON = "poisson"
    DETERMINISTIC = "deterministic"


@dataclass
class AttackConfig:
    target_domain: str = "foo.com."
    client_query_rate: float = 1000.0
    bogus_response_rate: float = 100.0
    guess_strategy: GuessStrategy = GuessStrategy.UNIFORM_RANDOM
    rounds: Optional[int] = None
    forged_value: str = "Y.Y.Y.Y"
    arrivals: Arrivals = Arrivals.POISSON
    wait_for_expiry: bool = True
    label_length: int = 7

    def __post_init__(self):
        self.target_domain = normalize_qname(self.target_domain)
        if self.client_query_rate <= 0 or self.bogus_response_rate <= 0:
            raise ValueError("attack rates must be positive")
        if self.rounds is not None and self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        if self.label_length < 1:
            raise ValueError("label_length must be >= 1")

    @property
    def glue_owner(self) -> str:
        return "ns." + self.target_domain


@dataclass
class AttackState:
    current_round: int = 0
    current_qname: Optional[str] = None
    attempts_this_round: int = 0
    successes: int = 0
    round_started_at: float = 0.0
    active: bool = False
    issued: set = field(default_factory=set)
    sweep_next: Optional[int] = None


def next_round_qname(cfg: AttackConfig, rng: random.Random, issued: set | None = None) -> str:
    """A random label under the target that this simulation has never used."""
    issued = issued if issued is not None else set()
    while True:
        label = "".join(rng.choice(LABEL_ALPHABET) for _ in range(cfg.label_length))
        qname = normalize_qname(f"{label}.{cfg.target_domain}")
        if qname not in issued:
            issued.add(qname)
            return qname


def effective_outstanding(cfg: AttackConfig | None, resolver_cap: int, response_time: float, send_rate: float | None = None) -> int:
    """Identical outstanding queries an attacker can hold open at once.

    Bounded both by the resolver cap and by how many queries fit into one
    response time at the sending rate.
    """
    if send_rate is None:
        send_rate = cfg.client_query_rate
    if resolver_cap < 1 or response_time <= 0 or send_rate <= 0:
        raise ValueError("inputs must be positive")
    by_window = math.floor(send_rate * response_time + 1e-9)
    return max(1, min(resolver_cap, by_window))


def forged_response(cfg: AttackConfig, qname: str, identity) -> ResponseMsg:
    records = (
        ResourceRecord(qname, QType.A, cfg.forged_value, FORGED_TTL, signed=False, authentic=False),
        ResourceRecord(cfg.glue_owner, QType.A, cfg.forged_value, FORGED_TTL, signed=False, authentic=False),
    )
    return ResponseMsg(QuestionKey(qname, QType.A), identity, records)


def emit_forgeries(
    state: AttackState,
    cfg: AttackConfig,
    now: float,
    space: GuessSpace,
    rng: random.Random,
) -> Iterator[tuple[float, ResponseMsg]]:
    """Endless stream of (arrival time, forged response) for the active round.

    The caller stops pulling once the round is over.
    """
    if not state.active or state.current_qname is None:
        raise RuntimeError("no active round")
    qname = state.current_qname
    gap = 1.0 / cfg.bogus_response_rate
    t = now
    size = space.size
    if cfg.guess_strategy is GuessStrategy.SEQUENTIAL_SWEEP and state.sweep_next is None:
        state.sweep_next = rng.randrange(size)
    # only the identity changes between forgeries
    template = forged_response(cfg, qname, space.decode(0))
    while True:
        t += rng.expovariate(cfg.bogus_response_rate) if cfg.arrivals is Arrivals.POISSON else gap
        if cfg.guess_strategy is GuessStrategy.UNIFORM_RANDOM:
            index = rng.randrange(size)
        else:
            index = state.sweep_next
            state.sweep_next = (state.sweep_next + 1) % size
        state.attempts_this_round += 1
        yield t, ResponseMsg(template.question, space.decode(index), template.records)


def schedule_next_round(state: AttackState, priority_cache_expiry: Optional[float], now: float) -> float:
    """Earliest useful start of the next round.

    While a validated copy of the target record sits in the priority cache
    every forged referral is blocked, so the attacker waits it out.
    """
    if priority_cache_expiry is None:
        return now
    return max(now, priority_cache_expiry)
