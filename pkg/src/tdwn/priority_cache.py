"""Two-tier resolver cache: validated records take priority over unsigned ones."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

from .dns_model import QType, ResourceRecord, ResponseMsg

Key = tuple[str, QType]


class Source(enum.Enum):
    FRESH_VALIDATING = "fresh-validating"
    PROACTIVE_UPDATE = "proactive-update"


@dataclass(frozen=True)
class CachedValidatedRecord:
    record: ResourceRecord
    inserted_at: float
    expires_at: float
    source: Source = Source.FRESH_VALIDATING


@dataclass(frozen=True)
class CachedNormalRecord:
    record: ResourceRecord
    inserted_at: float
    expires_at: float


class InsertResult(enum.Enum):
    INSERTED = "inserted"
    BLOCKED_BY_PRIORITY = "blocked-by-priority"


@dataclass(frozen=True)
class Consistency:
    conflicts: tuple[Key, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.conflicts


class TwoTierCache:
    """Priority tier of validated records over a normal tier of unsigned ones.

    A priority entry evicts conflicting normal entries on insert, cannot be
    displaced by unsigned data, and ends on TTL expiry or replacement by a
    newer validated record.
    """

    def __init__(self):
        self.priority: dict[Key, CachedValidatedRecord] = {}
        self.normal: dict[Key, CachedNormalRecord] = {}

    def _live_priority(self, key: Key, now: float) -> Optional[CachedValidatedRecord]:
        entry = self.priority.get(key)
        if entry is not None and entry.expires_at > now:
            return entry
        return None

    def insert_validated(self, rec: ResourceRecord, now: float, source: Source = Source.FRESH_VALIDATING) -> CachedValidatedRecord:
        if not rec.signed:
            raise ValueError(f"refusing unvalidated record {rec.owner} {rec.rtype.value} in priority cache")
        normal = self.normal.get(rec.key)
        if normal is not None and normal.record.value != rec.value:
            del self.normal[rec.key]
        entry = CachedValidatedRecord(rec, now, now + rec.ttl, source)
        self.priority[rec.key] = entry
        return entry

    def insert_normal(self, rec: ResourceRecord, now: float) -> InsertResult:
        entry = self._live_priority(rec.key, now)
        if entry is not None and entry.record.value != rec.value:
            return InsertResult.BLOCKED_BY_PRIORITY
        self.normal[rec.key] = CachedNormalRecord(rec, now, now + rec.ttl)
        return InsertResult.INSERTED

    def check_consistency(self, resp: ResponseMsg, now: float) -> Consistency:
        conflicts = []
        for rec in resp.records:
            entry = self._live_priority(rec.key, now)
            if entry is not None and entry.record.value != rec.value and rec.key not in conflicts:
                conflicts.append(rec.key)
        return Consistency(tuple(conflicts))

    def lookup(self, key: Key, now: float) -> Optional[ResourceRecord]:
        entry = self._live_priority(key, now)
        if entry is not None:
            return entry.record
        normal = self.normal.get(key)
        if normal is not None and normal.expires_at > now:
            return normal.record
        return None

    def priority_expiry(self, key: Key, now: float) -> Optional[float]:
        entry = self._live_priority(key, now)
        return entry.expires_at if entry else None

    def expire(self, now: float) -> int:
        dead_p = [k for k, e in self.priority.items() if e.expires_at <= now]
        dead_n = [k for k, e in self.normal.items() if e.expires_at <= now]
        for k in dead_p:
            del self.priority[k]
        for k in dead_n:
            del self.normal[k]
        return len(dead_p) + len(dead_n)

    def snapshot(self) -> dict:
        return {
            "priority": {k: e.record.value for k, e in sorted(self.priority.items(), key=_sort_key)},
            "normal": {k: e.record.value for k, e in sorted(self.normal.items(), key=_sort_key)},
        }


def _sort_key(item):
    (owner, rtype), _ = item
    return (owner, rtype.value)
