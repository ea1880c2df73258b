import pytest

from tdwn.dns_model import QType, QueryIdentity, QuestionKey, ResourceRecord, ResponseMsg
from tdwn.priority_cache import InsertResult, Source, TwoTierCache

KEY = ("ns.foo.com.", QType.A)
LIFE = 36000.0


def rec(value, signed=False, ttl=LIFE, owner="ns.foo.com."):
    return ResourceRecord(owner, QType.A, value, ttl, signed=signed)


def resp(*records):
    return ResponseMsg(QuestionKey("x.foo.com."), QueryIdentity(1, 2000, "auth-0"), records)


def test_validated_insert_evicts_conflicting_normal():
    c = TwoTierCache()
    c.insert_normal(rec("Y.Y.Y.Y"), 0.0)
    c.insert_validated(rec("X.X.X.X", signed=True), 1.0)
    assert KEY not in c.normal
    assert c.priority[KEY].record.value == "X.X.X.X"


def test_newer_validated_replaces_entry():
    c = TwoTierCache()
    c.insert_validated(rec("X.X.X.X", signed=True), 0.0)
    c.insert_validated(rec("X.X.0.1", signed=True), 100.0, Source.PROACTIVE_UPDATE)
    entry = c.priority[KEY]
    assert entry.record.value == "X.X.0.1"
    assert entry.expires_at == 100.0 + LIFE
    assert entry.source is Source.PROACTIVE_UPDATE


def test_insert_into_empty_caches():
    c = TwoTierCache()
    c.insert_validated(rec("X.X.X.X", signed=True), 0.0)
    assert len(c.priority) == 1 and not c.normal


def test_unsigned_record_refused_by_priority_tier():
    with pytest.raises(ValueError):
        TwoTierCache().insert_validated(rec("X.X.X.X"), 0.0)


def test_insert_normal_blocked_by_priority():
    c = TwoTierCache()
    c.insert_validated(rec("X.X.X.X", signed=True), 0.0)
    assert c.insert_normal(rec("Y.Y.Y.Y"), 10.0) is InsertResult.BLOCKED_BY_PRIORITY
    assert c.lookup(KEY, 10.0).value == "X.X.X.X"


def test_insert_normal_without_priority():
    assert TwoTierCache().insert_normal(rec("Y.Y.Y.Y"), 0.0) is InsertResult.INSERTED


def test_insert_normal_equal_value_is_no_conflict():
    c = TwoTierCache()
    c.insert_validated(rec("X.X.X.X", signed=True), 0.0)
    assert c.insert_normal(rec("X.X.X.X"), 1.0) is InsertResult.INSERTED


def test_insert_normal_after_priority_expiry():
    c = TwoTierCache()
    c.insert_validated(rec("X.X.X.X", signed=True, ttl=10.0), 0.0)
    assert c.insert_normal(rec("Y.Y.Y.Y"), 10.0) is InsertResult.INSERTED


def test_consistency():
    c = TwoTierCache()
    c.insert_validated(rec("X.X.X.X", signed=True), 0.0)
    assert c.check_consistency(resp(rec("X.X.X.X"), rec("A", owner="x.foo.com.")), 1.0).ok
    bad = c.check_consistency(resp(rec("Z.Z.Z.Z")), 1.0)
    assert bad.conflicts == (KEY,)
    assert c.check_consistency(resp(rec("Z.Z.Z.Z")), LIFE).ok


def test_expire_at_lifecycle():
    c = TwoTierCache()
    c.insert_validated(rec("X.X.X.X", signed=True), 5.0)
    assert c.expire(5.0 + LIFE - 1) == 0
    assert c.expire(5.0 + LIFE) == 1
    assert not c.priority


def test_expire_straddling():
    c = TwoTierCache()
    c.insert_validated(rec("X.X.X.X", signed=True, ttl=10.0), 0.0)
    c.insert_normal(rec("A", owner="a.foo.com.", ttl=30.0), 0.0)
    assert c.expire(20.0) == 1
    assert c.lookup(("a.foo.com.", QType.A), 20.0).value == "A"


def test_lookup_prefers_priority():
    c = TwoTierCache()
    c.insert_normal(rec("X.X.X.X", ttl=1e6), 0.0)
    c.insert_validated(rec("X.X.X.X", signed=True, ttl=10.0), 0.0)
    assert c.lookup(KEY, 1.0).signed
    assert not c.lookup(KEY, 11.0).signed
