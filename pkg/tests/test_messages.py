import pytest
from hypothesis import given, strategies as st

from swarms.crypto import HASH
from swarms.log import EntryKind, append, create_log
from swarms.messages import (
    Beacon,
    BeaconReply,
    KnownTails,
    LogUpdate,
    TailQuery,
    TailResponse,
    WhichLog,
    decode_message,
)
from swarms.naming import parse_name
from swarms.payloads import decode_data, decode_request, encode_data, encode_request
from swarms.wire import DecodeError

KEY = HASH.keypair(b"m")
N = parse_name("/swarm/a")


def _log():
    log = create_log(N, KEY, b"anchor", 0)
    append(log, EntryKind.DATA, b"x", KEY, 1)
    return log


MESSAGES = [
    Beacon(KEY.public_key, 10, True, (N, parse_name("/swarm/b"))).signed_by(KEY),
    BeaconReply(KEY.public_key, ((N, KnownTails(b"\x01" * 32, b"\x02" * 32)),
                                 (parse_name("/swarm/c"), KnownTails(None, b"\x03" * 32)))),
    BeaconReply(KEY.public_key, (), want_full_list=True),
    LogUpdate(KEY.public_key, N, WhichLog.REQUEST, tuple(_log().entries)),
    LogUpdate(KEY.public_key, N, WhichLog.RESULT, (), price=17),
    TailQuery(KEY.public_key, N, 99),
    TailResponse(KEY.public_key, N, 99, b"\x04" * 32),
    TailResponse(KEY.public_key, N, 5, None),
]


@pytest.mark.parametrize("msg", MESSAGES, ids=lambda m: type(m).__name__)
def test_roundtrip(msg):
    assert decode_message(msg.encode()) == msg


def test_beacon_signature():
    b = MESSAGES[0]
    assert b.verify(HASH)
    assert not Beacon(b.sender, 11, b.truncated, b.names, b.signature).verify(HASH)


@pytest.mark.parametrize("msg", MESSAGES, ids=lambda m: type(m).__name__)
def test_truncated_or_padded_is_rejected(msg):
    data = msg.encode()
    with pytest.raises(DecodeError):
        decode_message(data[:-1])
    with pytest.raises(DecodeError):
        decode_message(data + b"\x00")


def test_unknown_type():
    with pytest.raises(DecodeError):
        decode_message(b"\xee")


@given(st.binary(max_size=64))
def test_garbage_never_crashes(data):
    try:
        decode_message(data)
    except DecodeError:
        pass


# labels are names or expressions, which never contain a newline
LABELS = st.text(st.characters(blacklist_characters="\n", blacklist_categories=("Cs",)), max_size=40)


@given(LABELS, st.one_of(st.none(), st.integers(0, 2**32)))
def test_request_payload_roundtrip(text, price):
    assert decode_request(encode_request(text, price)) == (text, price)


@given(LABELS, st.binary(max_size=40))
def test_data_payload_roundtrip(label, value):
    assert decode_data(encode_data(label, value)) == (label, value)
