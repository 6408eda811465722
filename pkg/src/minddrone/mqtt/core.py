"""Broker and client protocol cores, free of IO and threads.

Both classes consume raw bytes plus an explicit `now` and return the
bytes/events that follow from them, so every protocol rule is testable
with no sockets involved and the threaded shells stay thin.  The broker
core is the single logical writer of broker state: shells feed it from
one queue, which is what makes routing deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .codec import (
    ACCEPTED,
    Connack,
    Connect,
    Disconnect,
    MqttPacket,
    NeedMore,
    Pingreq,
    Pingresp,
    ProtocolError,
    Puback,
    Publish,
    Suback,
    Subscribe,
    decode_packet,
    encode_packet,
)

#: Unacked QoS 1 deliveries are retransmitted (dup=1) this often...
RETRY_INTERVAL = 2.0
#: ...and the connection is closed after this many total transmissions.
MAX_ATTEMPTS = 5


@dataclass(frozen=True)
class Send:
    conn_id: int
    data: bytes


@dataclass(frozen=True)
class Close:
    conn_id: int


Action = Send | Close


@dataclass
class _Pending:
    publish: Publish
    deadline: float
    sends: int = 1


@dataclass
class _Session:
    client_id: str
    conn_id: int
    subs: dict[str, int] = field(default_factory=dict)
    next_pid: int = 1
    pending: dict[int, _Pending] = field(default_factory=dict)

    def take_pid(self) -> int:
        pid = self.next_pid
        self.next_pid = pid % 65535 + 1
        return pid


@dataclass
class _Conn:
    buffer: bytearray = field(default_factory=bytearray)
    client_id: str | None = None
    closed: bool = False


class BrokerCore:
    """Protocol state machine for the broker side.

    Connections are integers issued by the shell.  All methods return
    the ordered list of actions to perform; fan-out iterates sessions in
    insertion order, so per-(publisher, topic, subscriber) publish order
    follows input order.
    """

    def __init__(
        self, retry_interval: float = RETRY_INTERVAL, max_attempts: int = MAX_ATTEMPTS
    ) -> None:
        self.retry_interval = retry_interval
        self.max_attempts = max_attempts
        self._conns: dict[int, _Conn] = {}
        self._sessions: dict[str, _Session] = {}

    def connection_opened(self, conn_id: int) -> None:
        self._conns[conn_id] = _Conn()

    def connection_lost(self, conn_id: int) -> None:
        conn = self._conns.pop(conn_id, None)
        if conn and conn.client_id is not None:
            session = self._sessions.get(conn.client_id)
            # clean sessions only: subscription and retry state die with
            # the connection that owns them
            if session is not None and session.conn_id == conn_id:
                del self._sessions[conn.client_id]

    def data_received(self, conn_id: int, data: bytes, now: float) -> list[Action]:
        conn = self._conns.get(conn_id)
        if conn is None or conn.closed:
            return []
        conn.buffer += data
        actions: list[Action] = []
        while True:
            try:
                result = decode_packet(bytes(conn.buffer))
            except ProtocolError:
                actions.append(self._drop(conn_id))
                return actions
            if isinstance(result, NeedMore):
                return actions
            packet, consumed = result
            del conn.buffer[:consumed]
            try:
                actions += self._handle(conn_id, conn, packet, now)
            except ProtocolError:
                actions.append(self._drop(conn_id))
                return actions
            if conn.closed:
                return actions

    def tick(self, now: float) -> list[Action]:
        actions: list[Action] = []
        for session in list(self._sessions.values()):
            for pid, entry in list(session.pending.items()):
                if now < entry.deadline:
                    continue
                if entry.sends >= self.max_attempts:
                    actions.append(self._drop(session.conn_id))
                    break
                entry.sends += 1
                entry.deadline = now + self.retry_interval
                resend = Publish(
                    entry.publish.topic,
                    entry.publish.payload,
                    qos=1,
                    packet_id=pid,
                    dup=True,
                )
                actions.append(Send(session.conn_id, encode_packet(resend)))
        return actions

    def _handle(
        self, conn_id: int, conn: _Conn, packet: MqttPacket, now: float
    ) -> list[Action]:
        if isinstance(packet, Connect):
            return self._on_connect(conn_id, conn, packet)
        if conn.client_id is None:
            raise ProtocolError("first packet must be CONNECT")
        session = self._sessions[conn.client_id]

        if isinstance(packet, Subscribe):
            granted = []
            for topic, qos in packet.filters:
                session.subs[topic] = qos
                granted.append(qos)
            return [Send(conn_id, encode_packet(Suback(packet.packet_id, tuple(granted))))]

        if isinstance(packet, Publish):
            actions: list[Action] = []
            if packet.qos == 1:
                actions.append(Send(conn_id, encode_packet(Puback(packet.packet_id))))
            actions += self._route(packet, now)
            return actions

        if isinstance(packet, Puback):
            session.pending.pop(packet.packet_id, None)
            return []

        if isinstance(packet, Pingreq):
            return [Send(conn_id, encode_packet(Pingresp()))]

        if isinstance(packet, Disconnect):
            return [self._drop(conn_id)]

        raise ProtocolError(f"client may not send {type(packet).__name__}")

    def _on_connect(self, conn_id: int, conn: _Conn, packet: Connect) -> list[Action]:
        if conn.client_id is not None:
            raise ProtocolError("duplicate CONNECT")
        actions: list[Action] = []
        old = self._sessions.get(packet.client_id)
        if old is not None:
            # one live connection per client id: the newcomer wins
            actions.append(self._drop(old.conn_id))
        conn.client_id = packet.client_id
        self._sessions[packet.client_id] = _Session(packet.client_id, conn_id)
        actions.append(
            Send(conn_id, encode_packet(Connack(ACCEPTED, session_present=False)))
        )
        return actions

    def _route(self, packet: Publish, now: float) -> list[Action]:
        actions: list[Action] = []
        for session in self._sessions.values():
            granted = session.subs.get(packet.topic)
            if granted is None:
                continue
            qos = min(packet.qos, granted)
            if qos == 1:
                pid = session.take_pid()
                out = Publish(packet.topic, packet.payload, qos=1, packet_id=pid)
                session.pending[pid] = _Pending(out, now + self.retry_interval)
            else:
                out = Publish(packet.topic, packet.payload, qos=0)
            actions.append(Send(session.conn_id, encode_packet(out)))
        return actions

    def _drop(self, conn_id: int) -> Close:
        conn = self._conns.get(conn_id)
        if conn is not None:
            conn.closed = True
            if conn.client_id is not None:
                session = self._sessions.get(conn.client_id)
                if session is not None and session.conn_id == conn_id:
                    del self._sessions[conn.client_id]
        return Close(conn_id)


@dataclass(frozen=True)
class Message:
    topic: str
    payload: bytes
    qos: int


class ClientCore:
    """Protocol state machine for one client connection attempt.

    The reconnecting shell makes a fresh core per attempt and carries
    desired subscriptions and unacked publishes across cores.
    """

    def __init__(
        self,
        client_id: str,
        keep_alive: int = 60,
        retry_interval: float = RETRY_INTERVAL,
        max_attempts: int = MAX_ATTEMPTS,
    ) -> None:
        if not client_id:
            raise ValueError("client_id must be non-empty")
        self.client_id = client_id
        self.keep_alive = keep_alive
        self.retry_interval = retry_interval
        self.max_attempts = max_attempts
        self.connected = False
        self.dead: str | None = None
        self.acked_subs = 0
        self._buffer = bytearray()
        self._next_pid = 1
        self._last_control = 0.0
        self.pending: dict[int, _Pending] = {}

    def begin(self, now: float) -> bytes:
        self._last_control = now
        return encode_packet(Connect(self.client_id, self.keep_alive))

    def take_pid(self) -> int:
        pid = self._next_pid
        self._next_pid = pid % 65535 + 1
        return pid

    def publish(self, topic: str, payload: bytes, qos: int, now: float) -> bytes:
        packet = Publish(topic, payload, qos, self.take_pid() if qos == 1 else None)
        if qos == 1:
            self.pending[packet.packet_id] = _Pending(packet, now + self.retry_interval)
        self._last_control = now
        return encode_packet(packet)

    def subscribe(self, filters: list[tuple[str, int]], now: float) -> bytes:
        self._last_control = now
        return encode_packet(Subscribe(self.take_pid(), tuple(filters)))

    def data_received(self, data: bytes, now: float) -> tuple[list[Message], bytes]:
        """(deliveries, reply bytes); protocol faults mark the core dead."""
        self._buffer += data
        messages: list[Message] = []
        out = bytearray()
        while self.dead is None:
            try:
                result = decode_packet(bytes(self._buffer))
            except ProtocolError as exc:
                self.dead = str(exc)
                break
            if isinstance(result, NeedMore):
                break
            packet, consumed = result
            del self._buffer[:consumed]
            if isinstance(packet, Connack):
                if packet.return_code != ACCEPTED:
                    self.dead = f"connect refused with code {packet.return_code}"
                    break
                self.connected = True
            elif isinstance(packet, Publish):
                messages.append(Message(packet.topic, packet.payload, packet.qos))
                if packet.qos == 1:
                    out += encode_packet(Puback(packet.packet_id))
            elif isinstance(packet, Puback):
                self.pending.pop(packet.packet_id, None)
            elif isinstance(packet, Suback):
                self.acked_subs += 1
            elif isinstance(packet, Pingresp):
                pass
            else:
                self.dead = f"broker may not send {type(packet).__name__}"
        if out:
            self._last_control = now
        return messages, bytes(out)

    def tick(self, now: float) -> bytes:
        """Keep-alive pings and QoS 1 retransmissions that are due."""
        if not self.connected or self.dead is not None:
            return b""
        out = bytearray()
        if self.keep_alive and now - self._last_control >= self.keep_alive / 2:
            out += encode_packet(Pingreq())
            self._last_control = now
        for pid, entry in list(self.pending.items()):
            if now < entry.deadline:
                continue
            if entry.sends >= self.max_attempts:
                self.dead = f"qos1 publish {pid} unacked after {entry.sends} sends"
                break
            entry.sends += 1
            entry.deadline = now + self.retry_interval
            out += encode_packet(
                Publish(
                    entry.publish.topic, entry.publish.payload, 1, pid, dup=True
                )
            )
        return bytes(out)
