import numpy as np
import pytest

from modules.core_types import (
    INITIAL_TAG, Message, MessageKind, OperationRecord, OpKind, Ordering, ProcessId, Tag,
    Value, compare_tags, make_value, reader, server, writer,
)
from modules.errors import InvalidMessageError, InvalidParameterError


class TestTags:
    def test_compare_by_timestamp_first(self):
        assert compare_tags(Tag(2, writer(1)), Tag(3, writer(1))) is Ordering.LESS

    def test_writer_breaks_ties(self):
        assert compare_tags(Tag(3, writer(2)), Tag(3, writer(1))) is Ordering.GREATER

    def test_equal(self):
        assert compare_tags(Tag(5, writer(4)), Tag(5, writer(4))) is Ordering.EQUAL

    def test_initial_tag_is_minimum(self):
        assert INITIAL_TAG < Tag(1, writer(1))
        assert INITIAL_TAG < Tag(0, writer(1))

    def test_total_order_on_random_triples(self):
        rng = np.random.default_rng(11)
        for _ in range(500):
            a, b, c = (Tag(int(rng.integers(0, 4)), writer(int(rng.integers(0, 3)))) for _ in range(3))
            ab = compare_tags(a, b)
            # 反对称
            assert compare_tags(b, a).value == -ab.value
            assert (ab is Ordering.EQUAL) == (a == b)
            assert (ab is Ordering.LESS) == (a < b)
            if ab is not Ordering.GREATER and compare_tags(b, c) is not Ordering.GREATER:
                assert compare_tags(a, c) is not Ordering.GREATER
            if ab is Ordering.LESS and compare_tags(b, c) is Ordering.LESS:
                assert compare_tags(a, c) is Ordering.LESS

    def test_text_form(self):
        tag = Tag(7, writer(3))
        assert str(tag) == "7:w3"
        assert Tag.parse("7:w3") == tag

    def test_bad_text(self):
        with pytest.raises(InvalidParameterError):
            Tag.parse("x:w1")


class TestProcessId:
    def test_parse(self):
        assert ProcessId.parse("r12") == reader(12)
        assert ProcessId.parse("s0") == server(0)

    @pytest.mark.parametrize("text", ["", "q1", "s", "sx"])
    def test_parse_rejects(self, text):
        with pytest.raises(InvalidParameterError):
            ProcessId.parse(text)


class TestValues:
    def test_make_value_fixed_size_and_unique(self):
        a = make_value(writer(1), 1, 32)
        b = make_value(writer(1), 2, 32)
        c = make_value(writer(2), 1, 32)
        assert len(a.payload) == len(b.payload) == 32
        assert len({a, b, c}) == 3

    def test_make_value_too_small(self):
        with pytest.raises(InvalidParameterError):
            make_value(writer(1), 123456, 4)


class TestMessage:
    def test_write_request_requires_value(self):
        with pytest.raises(InvalidMessageError):
            Message(MessageKind.WRITE_REQUEST, sender=writer(1), tag=Tag(1, writer(1)), writer=writer(1), write_op=1)

    def test_read_request_rejects_tag(self):
        with pytest.raises(InvalidMessageError):
            Message(MessageKind.READ_REQUEST, sender=reader(1), tag=INITIAL_TAG, reader=reader(1), read_op=1)

    def test_client_and_counter(self):
        m = Message(MessageKind.READ_ACK, sender=server(2), tag=INITIAL_TAG, value=Value(),
                    reader=reader(4), read_op=9)
        assert m.client == reader(4)
        assert m.op_counter == 9
        assert m.is_read_message

    def test_size_includes_payload(self):
        plain = Message(MessageKind.WRITE_DISCOVER, sender=writer(1), writer=writer(1), write_op=1)
        loaded = Message(MessageKind.WRITE_REQUEST, sender=writer(1), tag=Tag(1, writer(1)),
                         value=Value(b"x" * 64), writer=writer(1), write_op=1)
        assert loaded.size_bits() - plain.size_bits() == 64 * 8


class TestOperationRecord:
    def test_latency(self):
        op = OperationRecord(1, reader(1), OpKind.READ, 1.0).responded(1.25, INITIAL_TAG, Value(), 2)
        assert op.complete
        assert op.latency == pytest.approx(0.25)
        assert op.returned_tag == INITIAL_TAG

    def test_response_before_invocation(self):
        with pytest.raises(InvalidParameterError):
            OperationRecord(1, reader(1), OpKind.READ, 2.0, responded_at=1.0)
