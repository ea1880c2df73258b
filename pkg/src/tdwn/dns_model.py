"""Simplified DNS message and identity model.

No wire format. Messages carry just enough to express question matching,
identity guessing and DNSSEC validation outcomes.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, field
from typing import Iterable, Optional

ID_SPACE = 65536
PORT_SPACE = 64000
PORT_MIN = 1024


class QType(enum.Enum):
    A = "A"
    NS = "NS"
    DNSKEY = "DNSKEY"
    RRSIG = "RRSIG"


class QClass(enum.Enum):
    IN = "IN"


@functools.lru_cache(maxsize=1 << 16)
def normalize_qname(raw: str) -> str:
    """Lower-case a domain name and canonicalize the trailing dot.

    >>> normalize_qname("Foo.COM")
    'foo.com.'
    """
    if not raw:
        raise ValueError("empty domain name")
    if raw == ".":
        return "."
    name = raw[:-1] if raw.endswith(".") else raw
    labels = name.split(".")
    if any(not label for label in labels):
        raise ValueError(f"malformed domain name {raw!r}: empty label")
    return ".".join(label.lower() for label in labels) + "."


@dataclass(frozen=True, eq=False)
class QuestionKey:
    qname: str
    qtype: QType = QType.A
    qclass: QClass = QClass.IN
    _hash: int = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "qname", normalize_qname(self.qname))
        # keys are hashed on every cache and transaction lookup; enum hashing is slow
        object.__setattr__(self, "_hash", hash((self.qname, self.qtype.value, self.qclass.value)))

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, QuestionKey):
            return NotImplemented
        return self.qname == other.qname and self.qtype is other.qtype and self.qclass is other.qclass

    def __hash__(self):
        return self._hash

    def __str__(self):
        return f"{self.qname}/{self.qtype.value}/{self.qclass.value}"


@dataclass(frozen=True, eq=False)
class QueryIdentity:
    """The secrets an off-path attacker has to guess."""

    txid: int
    port: int
    server_addr: str

    def __eq__(self, other):
        # hot path of response matching; most guesses differ in txid already
        if not isinstance(other, QueryIdentity):
            return NotImplemented
        return self.txid == other.txid and self.port == other.port and self.server_addr == other.server_addr

    def __hash__(self):
        return hash((self.txid, self.port, self.server_addr))

    def __post_init__(self):
        if not 0 <= self.txid < ID_SPACE:
            raise ValueError(f"txid {self.txid} outside [0, {ID_SPACE})")
        if not PORT_MIN <= self.port < PORT_MIN + PORT_SPACE:
            raise ValueError(f"port {self.port} outside usable range")


@dataclass(frozen=True)
class ResourceRecord:
    owner: str
    rtype: QType
    value: str
    ttl: float
    signed: bool = False
    # Ground truth set by the simulated zone. Only `validate` and the
    # metrics observer may read it.
    authentic: bool = True

    def __post_init__(self):
        object.__setattr__(self, "owner", normalize_qname(self.owner))
        if self.ttl <= 0:
            raise ValueError("ttl must be positive")

    @property
    def key(self) -> tuple[str, QType]:
        return (self.owner, self.rtype)


@dataclass(frozen=True)
class ResponseMsg:
    question: QuestionKey
    identity: QueryIdentity
    records: tuple[ResourceRecord, ...] = ()
    is_validating: bool = False
    is_error: bool = False

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        if not self.records and not self.is_error:
            raise ValueError("only error responses may carry no records")


@dataclass(frozen=True)
class OutstandingQuery:
    question: QuestionKey
    identity: QueryIdentity
    sent_at: float
    dnssec: bool = False


class MatchKind(enum.Enum):
    GENUINE_MATCH = "genuine-match"
    FAILURE_ATTEMPT = "failure-attempt"
    UNRELATED = "unrelated"


@dataclass(frozen=True)
class MatchResult:
    kind: MatchKind
    query: Optional[OutstandingQuery] = None


def match_response(resp: ResponseMsg, outstanding: Iterable[OutstandingQuery]) -> MatchResult:
    """Classify a response against a resolver's outstanding queries.

    A response sharing the question triple with some outstanding query but
    matching none of their full identities is a failure attempt.
    """
    same_question = False
    best = None
    seen, seen_eq = None, False
    for query in outstanding:
        # outstanding queries usually share one key object; compare it once
        if query.question is not seen:
            seen, seen_eq = query.question, query.question == resp.question
        if not seen_eq:
            continue
        same_question = True
        if query.identity == resp.identity:
            # Earliest-sent wins so the result does not depend on iteration order.
            if best is None or (query.sent_at, query.identity.txid, query.identity.port) < (
                best.sent_at,
                best.identity.txid,
                best.identity.port,
            ):
                best = query
    if best is not None:
        return MatchResult(MatchKind.GENUINE_MATCH, best)
    if same_question:
        return MatchResult(MatchKind.FAILURE_ATTEMPT)
    return MatchResult(MatchKind.UNRELATED)


class GuessForm(enum.Enum):
    ADDITIVE = "additive"  # (I + P) * N, as printed
    PRODUCT = "product"  # I * P * N


@dataclass(frozen=True)
class GuessSpace:
    """Indexable space of query identities of size G.

    The resolver draws secret identities and the attacker draws guesses from
    the same index range, so one guess hits a given query with probability 1/G.
    Index k decodes injectively to (txid, port, server).
    """

    id_space: int = ID_SPACE
    port_space: int = PORT_SPACE
    n_auth: float = 2.5
    form: GuessForm = GuessForm.ADDITIVE
    size_override: Optional[int] = None

    def __post_init__(self):
        if self.id_space < 1 or self.id_space > ID_SPACE:
            raise ValueError("id_space must be in [1, 65536]")
        if self.port_space < 1 or self.port_space > PORT_SPACE:
            raise ValueError("port_space must be in [1, 64000]")
        if self.n_auth <= 0:
            raise ValueError("n_auth must be positive")
        if self.size_override is not None and self.size_override < 1:
            raise ValueError("guess space size must be >= 1")

    @property
    def size(self) -> int:
        if self.size_override is not None:
            return self.size_override
        if self.form is GuessForm.ADDITIVE:
            return int(round((self.id_space + self.port_space) * self.n_auth))
        return int(round(self.id_space * self.port_space * self.n_auth))

    def decode(self, index: int) -> QueryIdentity:
        if not 0 <= index < self.size:
            raise IndexError(index)
        txid = index % self.id_space
        rest = index // self.id_space
        port = PORT_MIN + rest % self.port_space
        server = rest // self.port_space
        return QueryIdentity(txid, port, f"auth-{server}")

    def encode(self, identity: QueryIdentity) -> int:
        server = int(identity.server_addr.rsplit("-", 1)[1])
        return (server * self.port_space + (identity.port - PORT_MIN)) * self.id_space + identity.txid

    def sample(self, rng, exclude: Iterable[QueryIdentity] = ()) -> QueryIdentity:
        """Uniform identity not in `exclude` (distinct outstanding secrets)."""
        taken = {self.encode(i) for i in exclude}
        if len(taken) >= self.size:
            raise ValueError("guess space exhausted")
        while True:
            k = rng.randrange(self.size)
            if k not in taken:
                return self.decode(k)


class Verdict(enum.Enum):
    VALID = "valid"
    NEEDS_CHAIN = "needs-chain"
    BOGUS = "bogus"


@dataclass(frozen=True)
class ValidationResult:
    verdict: Verdict
    missing: tuple[tuple[str, QType], ...] = field(default=())


def validate(records: Iterable[ResourceRecord]) -> ValidationResult:
    """Stand-in for DNSSEC signature checking.

    Signed records are valid only if the zone really published them.
    Unsigned records need a further chain query before the set validates.
    """
    missing = []
    for rec in records:
        if rec.signed and not rec.authentic:
            return ValidationResult(Verdict.BOGUS)
        if not rec.signed:
            missing.append(rec.key)
    if missing:
        return ValidationResult(Verdict.NEEDS_CHAIN, tuple(missing))
    return ValidationResult(Verdict.VALID)


def is_poisoned(records: Iterable[ResourceRecord]) -> bool:
    """Ground-truth check used by metrics, never by resolver logic."""
    return any(not rec.authentic for rec in records)
