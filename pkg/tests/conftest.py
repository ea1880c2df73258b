import random

import pytest

from tdwn.dns_model import GuessSpace, QType, QuestionKey, ResourceRecord, ResponseMsg
from tdwn.detector import DetectorConfig
from tdwn.resolver import ResolverConfig, TDWNResolver

ZONE = "foo.com."
GLUE = "ns.foo.com."


def answer(qname, value="A.A.A.A", glue="X.X.X.X", signed=False, authentic=True, ttl=300.0, glue_signed=None):
    glue_signed = signed if glue_signed is None else glue_signed
    return (
        ResourceRecord(qname, QType.A, value, ttl, signed=signed, authentic=authentic),
        ResourceRecord(GLUE, QType.A, glue, ttl, signed=glue_signed, authentic=authentic),
    )


def legacy(query, records):
    return ResponseMsg(query.question, query.identity, tuple(records))


def validating(query, records):
    return ResponseMsg(query.question, query.identity, tuple(records), is_validating=True)


def forged(query, space, value="Y.Y.Y.Y", identity=None):
    """Forged referral for the query's question; wrong identity unless one is given."""
    if identity is None:
        k = (space.encode(query.identity) + 1) % space.size
        identity = space.decode(k)
    return ResponseMsg(query.question, identity, answer(query.question.qname, value, value, authentic=False))


@pytest.fixture
def make_resolver():
    def build(tod=3, cap=20, timeout=2.0, priority=True, g=None, seed=0):
        space = GuessSpace(size_override=g) if g else GuessSpace()
        cfg = ResolverConfig(
            max_identical_outstanding=cap,
            transaction_timeout=timeout,
            detector=DetectorConfig(tod=tod),
            priority_cache_enabled=priority,
            guess_space=space,
        )
        return TDWNResolver(cfg, random.Random(seed))

    return build


@pytest.fixture
def q():
    return QuestionKey("asq50pn.foo.com")
