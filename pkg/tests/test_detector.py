import pytest

from tdwn.detector import DetectorConfig, FailureDetector
from tdwn.dns_model import QuestionKey

Q = QuestionKey("asq50pn.foo.com.")


def test_record_failure_increments():
    det = FailureDetector()
    det.open(Q, 0.0)
    assert det.record_failure(Q, 0.1) == 1
    assert det.record_failure(Q, 0.2) == 2


def test_counter_resets_with_new_transaction():
    det = FailureDetector()
    det.open(Q, 0.0)
    det.record_failure(Q, 0.1)
    det.record_failure(Q, 0.2)
    det.close(Q)
    det.open(Q, 1.0)
    assert det.record_failure(Q, 1.1) == 1


def test_failure_without_transaction_rejected():
    with pytest.raises(LookupError):
        FailureDetector().record_failure(Q, 0.0)


@pytest.mark.parametrize("tod,count,expected", [(3, 2, False), (3, 3, True), (1, 1, True), (3, 0, False)])
def test_should_escalate(tod, count, expected):
    det = FailureDetector(DetectorConfig(tod=tod))
    det.open(Q, 0.0)
    for _ in range(count):
        det.record_failure(Q, 0.0)
    assert det.should_escalate(Q) is expected


def test_tod_must_be_positive():
    with pytest.raises(ValueError):
        DetectorConfig(tod=0)


def test_counters_are_per_question():
    det = FailureDetector(DetectorConfig(tod=2))
    other = QuestionKey("b3rr5v.foo.com.")
    det.open(Q, 0.0)
    det.open(other, 0.0)
    det.record_failure(Q, 0.0)
    det.record_failure(Q, 0.0)
    assert det.should_escalate(Q) and not det.should_escalate(other)
