"""MQTT 3.1.1 wire codec, written against the published byte layout.

Subset: QoS 0/1, clean sessions, exact-match topics.  No wills, no
retained messages, no auth fields, no QoS 2.  decode_packet is total:
any byte sequence yields a packet, a need-more-bytes outcome, or a
ProtocolError; it never raises anything else.
"""

from __future__ import annotations

from dataclasses import dataclass, field

#: Hard cap on publish payloads; well under the protocol's 256 MB frame
#: limit and large enough for any telemetry this system carries.
MAX_PAYLOAD = 256 * 1024

#: Largest encodable remaining-length value (4 varint bytes).
MAX_REMAINING_LENGTH = 268_435_455

_PROTO_NAME = b"\x00\x04MQTT"
_PROTO_LEVEL = 4

CONNECT, CONNACK, PUBLISH, PUBACK = 1, 2, 3, 4
SUBSCRIBE, SUBACK, PINGREQ, PINGRESP, DISCONNECT = 8, 9, 12, 13, 14

# CONNACK return codes (3.1.1 table 3.1)
ACCEPTED = 0
REFUSED_PROTOCOL = 1
REFUSED_IDENTIFIER = 2
REFUSED_UNAVAILABLE = 3


class EncodeError(ValueError):
    """Packet violates an invariant and has no wire form."""


class ProtocolError(ValueError):
    """Malformed incoming bytes; the connection carrying them must close."""


@dataclass(frozen=True)
class NeedMore:
    """Incomplete frame: at least `expected` total bytes are required."""

    expected: int


@dataclass(frozen=True)
class Connect:
    client_id: str
    keep_alive: int = 60
    clean_session: bool = True


@dataclass(frozen=True)
class Connack:
    return_code: int = ACCEPTED
    session_present: bool = False


@dataclass(frozen=True)
class Publish:
    topic: str
    payload: bytes
    qos: int = 0
    packet_id: int | None = None
    dup: bool = False
    retain: bool = False


@dataclass(frozen=True)
class Puback:
    packet_id: int


@dataclass(frozen=True)
class Subscribe:
    packet_id: int
    #: (topic filter, requested qos) pairs
    filters: tuple[tuple[str, int], ...] = field(default_factory=tuple)


@dataclass(frozen=True)
class Suback:
    packet_id: int
    granted: tuple[int, ...] = field(default_factory=tuple)


@dataclass(frozen=True)
class Pingreq:
    pass


@dataclass(frozen=True)
class Pingresp:
    pass


@dataclass(frozen=True)
class Disconnect:
    pass


MqttPacket = (
    Connect
    | Connack
    | Publish
    | Puback
    | Subscribe
    | Suback
    | Pingreq
    | Pingresp
    | Disconnect
)


def valid_topic(topic: str) -> bool:
    """Non-empty, no wildcards, no NUL; publishable and subscribable."""
    if not topic or len(topic.encode("utf-8")) > 65535:
        return False
    return not any(ch in topic for ch in ("+", "#", "\x00"))


def encode_varint(value: int) -> bytes:
    if not 0 <= value <= MAX_REMAINING_LENGTH:
        raise EncodeError(f"remaining length {value} out of range")
    out = bytearray()
    while True:
        value, digit = divmod(value, 128)
        out.append(digit | (0x80 if value else 0))
        if not value:
            return bytes(out)


def decode_varint(data: bytes, offset: int = 0) -> tuple[int, int] | NeedMore:
    """(value, bytes consumed), or NeedMore if the varint is cut short."""
    value = 0
    for i in range(4):
        if offset + i >= len(data):
            return NeedMore(offset + i + 1)
        byte = data[offset + i]
        value |= (byte & 0x7F) << (7 * i)
        if not byte & 0x80:
            return value, i + 1
    raise ProtocolError("remaining length varint longer than 4 bytes")


def _mqtt_string(text: str) -> bytes:
    raw = text.encode("utf-8")
    if len(raw) > 65535:
        raise EncodeError("string exceeds 65535 bytes")
    return len(raw).to_bytes(2, "big") + raw


def _check_packet_id(pid: int) -> int:
    if not 1 <= pid <= 65535:
        raise EncodeError(f"packet id {pid} out of range")
    return pid


def encode_packet(packet: MqttPacket) -> bytes:
    if isinstance(packet, Connect):
        if not packet.client_id:
            raise EncodeError("client_id must be non-empty")
        if not 0 <= packet.keep_alive <= 65535:
            raise EncodeError("keep_alive out of range")
        flags = 0x02 if packet.clean_session else 0x00
        body = (
            _PROTO_NAME
            + bytes((_PROTO_LEVEL, flags))
            + packet.keep_alive.to_bytes(2, "big")
            + _mqtt_string(packet.client_id)
        )
        return _frame(CONNECT, 0, body)

    if isinstance(packet, Connack):
        if not 0 <= packet.return_code <= 255:
            raise EncodeError("return code out of range")
        return _frame(CONNACK, 0, bytes((int(packet.session_present), packet.return_code)))

    if isinstance(packet, Publish):
        if not valid_topic(packet.topic):
            raise EncodeError(f"invalid publish topic {packet.topic!r}")
        if packet.qos not in (0, 1):
            raise EncodeError("qos must be 0 or 1")
        if (packet.packet_id is not None) != (packet.qos == 1):
            raise EncodeError("packet_id present iff qos is 1")
        if len(packet.payload) > MAX_PAYLOAD:
            raise EncodeError("payload exceeds cap")
        flags = (int(packet.dup) << 3) | (packet.qos << 1) | int(packet.retain)
        body = _mqtt_string(packet.topic)
        if packet.qos == 1:
            body += _check_packet_id(packet.packet_id).to_bytes(2, "big")
        return _frame(PUBLISH, flags, body + bytes(packet.payload))

    if isinstance(packet, Puback):
        return _frame(PUBACK, 0, _check_packet_id(packet.packet_id).to_bytes(2, "big"))

    if isinstance(packet, Subscribe):
        if not packet.filters:
            raise EncodeError("subscribe needs at least one filter")
        body = bytearray(_check_packet_id(packet.packet_id).to_bytes(2, "big"))
        for topic, qos in packet.filters:
            if not valid_topic(topic):
                raise EncodeError(f"invalid topic filter {topic!r}")
            if qos not in (0, 1):
                raise EncodeError("requested qos must be 0 or 1")
            body += _mqtt_string(topic) + bytes((qos,))
        return _frame(SUBSCRIBE, 0x02, bytes(body))

    if isinstance(packet, Suback):
        if not packet.granted:
            raise EncodeError("suback needs at least one return code")
        if any(g not in (0, 1, 0x80) for g in packet.granted):
            raise EncodeError("granted qos must be 0, 1, or 0x80")
        body = _check_packet_id(packet.packet_id).to_bytes(2, "big") + bytes(packet.granted)
        return _frame(SUBACK, 0, body)

    if isinstance(packet, Pingreq):
        return _frame(PINGREQ, 0, b"")
    if isinstance(packet, Pingresp):
        return _frame(PINGRESP, 0, b"")
    if isinstance(packet, Disconnect):
        return _frame(DISCONNECT, 0, b"")
    raise EncodeError(f"not an MQTT packet: {packet!r}")


def _frame(ptype: int, flags: int, body: bytes) -> bytes:
    return bytes(((ptype << 4) | flags,)) + encode_varint(len(body)) + body


def decode_packet(data: bytes) -> tuple[MqttPacket, int] | NeedMore:
    """One packet off the front of `data`, plus bytes consumed.

    Partial frames report the minimum total length needed; garbage
    raises ProtocolError.  Nothing else escapes.
    """
    if not data:
        return NeedMore(1)
    first = data[0]
    ptype, flags = first >> 4, first & 0x0F
    head = decode_varint(data, 1)
    if isinstance(head, NeedMore):
        return head
    length, var_n = head
    if length > MAX_PAYLOAD + 64 * 1024:
        raise ProtocolError(f"frame of {length} bytes exceeds any legal packet here")
    total = 1 + var_n + length
    if len(data) < total:
        return NeedMore(total)
    body = data[1 + var_n : total]
    return _decode_body(ptype, flags, body), total


def _decode_body(ptype: int, flags: int, body: bytes) -> MqttPacket:
    if ptype == CONNECT:
        _expect_flags(flags, 0, "connect")
        if body[:6] != _PROTO_NAME or len(body) < 10:
            raise ProtocolError("bad protocol name")
        if body[6] != _PROTO_LEVEL:
            raise ProtocolError(f"unsupported protocol level {body[6]}")
        connect_flags = body[7]
        if connect_flags & ~0x02:
            raise ProtocolError("connect flags outside the supported subset")
        keep_alive = int.from_bytes(body[8:10], "big")
        client_id, rest = _read_string(body, 10)
        if rest != len(body):
            raise ProtocolError("trailing bytes after client id")
        if not client_id:
            raise ProtocolError("empty client id")
        return Connect(client_id, keep_alive, bool(connect_flags & 0x02))

    if ptype == CONNACK:
        _expect_flags(flags, 0, "connack")
        if len(body) != 2 or body[0] & ~0x01:
            raise ProtocolError("malformed connack")
        return Connack(body[1], bool(body[0] & 0x01))

    if ptype == PUBLISH:
        dup, qos, retain = bool(flags & 0x08), (flags >> 1) & 0x03, bool(flags & 0x01)
        if qos not in (0, 1):
            raise ProtocolError(f"unsupported publish qos {qos}")
        topic, pos = _read_string(body, 0)
        if not valid_topic(topic):
            raise ProtocolError(f"invalid publish topic {topic!r}")
        packet_id = None
        if qos == 1:
            if pos + 2 > len(body):
                raise ProtocolError("publish truncated before packet id")
            packet_id = int.from_bytes(body[pos : pos + 2], "big")
            if packet_id == 0:
                raise ProtocolError("packet id 0 is reserved")
            pos += 2
        payload = body[pos:]
        if len(payload) > MAX_PAYLOAD:
            raise ProtocolError("payload exceeds cap")
        return Publish(topic, payload, qos, packet_id, dup, retain)

    if ptype == PUBACK:
        _expect_flags(flags, 0, "puback")
        return Puback(_read_packet_id(body, exact=True))

    if ptype == SUBSCRIBE:
        _expect_flags(flags, 0x02, "subscribe")
        packet_id = _read_packet_id(body, exact=False)
        filters = []
        pos = 2
        while pos < len(body):
            topic, pos = _read_string(body, pos)
            if pos == len(body):
                raise ProtocolError("filter without requested qos")
            qos = body[pos]
            pos += 1
            if qos not in (0, 1):
                raise ProtocolError(f"unsupported requested qos {qos}")
            if not valid_topic(topic):
                raise ProtocolError(f"invalid topic filter {topic!r}")
            filters.append((topic, qos))
        if not filters:
            raise ProtocolError("subscribe with no filters")
        return Subscribe(packet_id, tuple(filters))

    if ptype == SUBACK:
        _expect_flags(flags, 0, "suback")
        packet_id = _read_packet_id(body, exact=False)
        granted = tuple(body[2:])
        if not granted or any(g not in (0, 1, 0x80) for g in granted):
            raise ProtocolError("malformed suback return codes")
        return Suback(packet_id, granted)

    if ptype == PINGREQ:
        _expect_empty(flags, body, "pingreq")
        return Pingreq()
    if ptype == PINGRESP:
        _expect_empty(flags, body, "pingresp")
        return Pingresp()
    if ptype == DISCONNECT:
        _expect_empty(flags, body, "disconnect")
        return Disconnect()
    raise ProtocolError(f"packet type {ptype} not in the supported subset")


def _expect_flags(flags: int, want: int, name: str) -> None:
    if flags != want:
        raise ProtocolError(f"bad fixed-header flags {flags:#x} for {name}")


def _expect_empty(flags: int, body: bytes, name: str) -> None:
    _expect_flags(flags, 0, name)
    if body:
        raise ProtocolError(f"{name} carries no body")


def _read_string(data: bytes, pos: int) -> tuple[str, int]:
    if pos + 2 > len(data):
        raise ProtocolError("truncated string length")
    n = int.from_bytes(data[pos : pos + 2], "big")
    end = pos + 2 + n
    if end > len(data):
        raise ProtocolError("truncated string body")
    try:
        return data[pos + 2 : end].decode("utf-8"), end
    except UnicodeDecodeError as exc:
        raise ProtocolError("string is not valid UTF-8") from exc


def _read_packet_id(body: bytes, exact: bool) -> int:
    if (len(body) != 2 if exact else len(body) < 2):
        raise ProtocolError("missing packet id")
    pid = int.from_bytes(body[:2], "big")
    if pid == 0:
        raise ProtocolError("packet id 0 is reserved")
    return pid
