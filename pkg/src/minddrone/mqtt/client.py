"""Reconnecting MQTT client shell around ClientCore.

One reader thread per live connection (message callbacks run there, in
arrival order), one ticker thread for keep-alive and retransmissions,
one supervisor thread that rebuilds the connection after a drop with
exponential backoff and replays subscriptions and unacked publishes.
"""

from __future__ import annotations

import threading
import time
from typing import Callable

from .core import ClientCore, Message
from .net import TcpNetwork, TransportError

CONNECT_TIMEOUT = 5.0
BACKOFF_BASE = 1.0
BACKOFF_CAP = 30.0

_TICK = 0.05


class ConnectError(ConnectionError):
    """Initial connect failed: no broker, timeout, or refused CONNACK."""


class MqttClient:
    def __init__(
        self,
        client_id: str,
        network=None,
        host: str = "127.0.0.1",
        port: int = 1883,
        keep_alive: int = 60,
        on_message: Callable[[Message], None] | None = None,
        clock: Callable[[], float] = time.monotonic,
        connect_timeout: float = CONNECT_TIMEOUT,
        backoff_base: float = BACKOFF_BASE,
        backoff_cap: float = BACKOFF_CAP,
        retry_interval: float | None = None,
    ) -> None:
        self.client_id = client_id
        self._network = network if network is not None else TcpNetwork()
        self._host = host
        self._port = port
        self._keep_alive = keep_alive
        self._on_message = on_message
        self._clock = clock
        self._connect_timeout = connect_timeout
        self._backoff_base = backoff_base
        self._backoff_cap = backoff_cap
        self._retry_interval = retry_interval

        self._mu = threading.RLock()
        self._core: ClientCore | None = None
        self._conn = None
        self._subs: dict[str, int] = {}
        self._backlog: list[tuple[str, bytes]] = []  # qos1 queued while down
        self._suback_seen = threading.Event()
        self._closed = False
        self._wake = threading.Event()
        self._threads: list[threading.Thread] = []

    # lifecycle

    def connect(self) -> "MqttClient":
        """Blocking first connect; later drops reconnect in background."""
        if self._closed:
            raise RuntimeError("client is closed")
        if not self._attempt():
            raise ConnectError(f"no broker at {self._host}:{self._port}")
        for target in (self._ticker_loop, self._supervisor_loop):
            t = threading.Thread(target=target, daemon=True)
            t.start()
            self._threads.append(t)
        return self

    def close(self) -> None:
        with self._mu:
            self._closed = True
            conn = self._conn
            self._conn = None
        self._wake.set()
        if conn is not None:
            conn.close()
        for t in self._threads:
            t.join(timeout=5.0)
        self._threads.clear()

    @property
    def connected(self) -> bool:
        with self._mu:
            return self._core is not None and self._core.connected

    # operations

    def subscribe(self, topic: str, qos: int = 1, wait: float | None = 5.0) -> None:
        with self._mu:
            self._subs[topic] = qos
            self._suback_seen.clear()
            if self._core is not None and self._core.connected:
                self._send(self._core.subscribe([(topic, qos)], self._clock()))
            # else: recorded; the next (re)connect replays it
        if wait is not None and not self._suback_seen.wait(wait):
            raise TimeoutError(f"no SUBACK for {topic!r} within {wait}s")

    def publish(self, topic: str, payload: bytes | str, qos: int = 0) -> None:
        data = payload.encode("utf-8") if isinstance(payload, str) else bytes(payload)
        with self._mu:
            if self._core is None or not self._core.connected:
                if qos == 1:
                    self._backlog.append((topic, data))
                return
            self._send(self._core.publish(topic, data, qos, self._clock()))

    # connection machinery

    def _attempt(self) -> bool:
        """One full connect attempt; True once CONNACK is accepted.

        Everything handshake-scoped lives in locals (the event, the
        core, the conn) so leftovers from a failed attempt cannot leak
        into the next one.  On any failure the attempt uninstalls
        whatever it installed.
        """
        try:
            conn = self._network.connect(self._host, self._port, self._connect_timeout)
        except TransportError:
            return False
        kwargs = {}
        if self._retry_interval is not None:
            kwargs["retry_interval"] = self._retry_interval
        core = ClientCore(self.client_id, self._keep_alive, **kwargs)
        ready = threading.Event()
        with self._mu:
            if self._closed:
                conn.close()
                return False
            self._conn = conn
            self._core = core
        try:
            conn.send(core.begin(self._clock()))
        except TransportError:
            self._drop_attempt(core, conn)
            return False
        reader = threading.Thread(
            target=self._read_loop, args=(core, conn, ready), daemon=True
        )
        reader.start()
        ready.wait(self._connect_timeout)
        with self._mu:
            if core.dead is not None or not core.connected or self._closed:
                accepted = False
            else:
                # live again: replay state owed from before the drop
                accepted = True
                now = self._clock()
                replay = b""
                if self._subs:
                    replay += core.subscribe(list(self._subs.items()), now)
                backlog, self._backlog = self._backlog, []
                for topic, data in backlog:
                    replay += core.publish(topic, data, 1, now)
                if replay:
                    self._send(replay)
        if not accepted:
            self._drop_attempt(core, conn)
        return accepted

    def _drop_attempt(self, core: ClientCore, conn) -> None:
        with self._mu:
            if self._core is core:
                self._core = None
                self._conn = None
                self._carry_unacked(core)
        conn.close()

    def _read_loop(self, core: ClientCore, conn, ready: threading.Event) -> None:
        while True:
            try:
                data = conn.recv()
            except (TransportError, OSError):
                data = b""
            if not data:
                break
            with self._mu:
                if self._core is not core:
                    return
                acked_before = core.acked_subs
                messages, out = core.data_received(data, self._clock())
                if core.connected or core.dead is not None:
                    ready.set()
                if core.acked_subs != acked_before:
                    self._suback_seen.set()
                self._send(out)
                dead = core.dead is not None
            for msg in messages:
                if self._on_message is not None:
                    self._on_message(msg)
            if dead:
                break
        ready.set()
        with self._mu:
            if self._core is not core:
                return  # superseded; the replacement owns recovery
            self._carry_unacked(core)
        self._wake.set()

    def _carry_unacked(self, core: ClientCore) -> None:
        for entry in core.pending.values():
            self._backlog.append((entry.publish.topic, bytes(entry.publish.payload)))
        core.pending.clear()
        core.connected = False

    def _ticker_loop(self) -> None:
        while not self._closed:
            time.sleep(_TICK)
            with self._mu:
                core, conn = self._core, self._conn
                if core is None or conn is None or not core.connected:
                    continue
                out = core.tick(self._clock())
                if out:
                    self._send(out)
                if core.dead is not None:
                    conn.close()

    def _supervisor_loop(self) -> None:
        backoff = self._backoff_base
        while not self._closed:
            self._wake.wait()
            self._wake.clear()
            if self._closed:
                return
            with self._mu:
                core = self._core
                if core is not None and core.connected and core.dead is None:
                    continue  # stale wake; the link is fine
            while not self._closed:
                with self._mu:
                    old_conn, old_core = self._conn, self._core
                    self._conn = None
                    self._core = None
                    if old_core is not None:
                        self._carry_unacked(old_core)
                if old_conn is not None:
                    old_conn.close()
                if self._attempt():
                    backoff = self._backoff_base
                    break
                self._wake.clear()
                if self._wake.wait(backoff) and self._closed:
                    return
                backoff = min(backoff * 2, self._backoff_cap)

    def _send(self, data: bytes) -> None:
        if not data or self._conn is None:
            return
        try:
            self._conn.send(data)
        except TransportError:
            pass  # reader will observe the EOF and trigger reconnect

    def __enter__(self) -> "MqttClient":
        return self.connect()

    def __exit__(self, *exc) -> None:
        self.close()
