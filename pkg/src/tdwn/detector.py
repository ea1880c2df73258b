"""Failure-response counting per resolution transaction."""

from __future__ import annotations

from dataclasses import dataclass

from .dns_model import QuestionKey


@dataclass(frozen=True)
class DetectorConfig:
    tod: int = 3

    def __post_init__(self):
        if self.tod < 1:
            raise ValueError("tod must be >= 1")


@dataclass
class FailureCounter:
    question: QuestionKey
    count: int = 0
    window_started_at: float = 0.0


class FailureDetector:
    """Counts failure responses for each open question.

    A counter lives exactly as long as the transaction for its question:
    `open` when the first upstream query goes out, `close` when the
    transaction resolves or times out.
    """

    def __init__(self, config: DetectorConfig | None = None):
        self.config = config or DetectorConfig()
        self._counters: dict[QuestionKey, FailureCounter] = {}

    def open(self, question: QuestionKey, now: float) -> None:
        self._counters[question] = FailureCounter(question, 0, now)

    def close(self, question: QuestionKey) -> None:
        self._counters.pop(question, None)

    def is_open(self, question: QuestionKey) -> bool:
        return question in self._counters

    def record_failure(self, question: QuestionKey, now: float) -> int:
        counter = self._counters.get(question)
        if counter is None:
            raise LookupError(f"no outstanding query for {question}; classify with match_response first")
        counter.count += 1
        return counter.count

    def count(self, question: QuestionKey) -> int:
        counter = self._counters.get(question)
        return counter.count if counter else 0

    def should_escalate(self, question: QuestionKey) -> bool:
        return self.count(question) >= self.config.tod
