"""Threaded broker shell around BrokerCore.

Accept and per-connection reader threads push events onto one queue; a
single dispatcher thread owns the core, so all state mutations are
serialized exactly as the core expects.  Timer granularity bounds how
late a QoS 1 retransmission can be, not whether it happens.
"""

from __future__ import annotations

import queue
import threading
import time
from typing import Callable

from .core import BrokerCore, Close, Send
from .net import TcpNetwork, TransportError

_TICK = 0.05


class Broker:
    def __init__(
        self,
        network=None,
        host: str = "127.0.0.1",
        port: int = 1883,
        clock: Callable[[], float] = time.monotonic,
        retry_interval: float | None = None,
        max_attempts: int | None = None,
    ) -> None:
        self._network = network if network is not None else TcpNetwork()
        self._host = host
        self._requested_port = port
        self._clock = clock
        kwargs = {}
        if retry_interval is not None:
            kwargs["retry_interval"] = retry_interval
        if max_attempts is not None:
            kwargs["max_attempts"] = max_attempts
        self._core = BrokerCore(**kwargs)
        self._events: queue.Queue = queue.Queue()
        self._conns: dict[int, object] = {}
        self._next_id = 0
        self._lock = threading.Lock()
        self._listener = None
        self._threads: list[threading.Thread] = []
        self._running = False

    @property
    def port(self) -> int:
        if self._listener is None:
            raise RuntimeError("broker is not running")
        return self._listener.port

    def start(self) -> "Broker":
        if self._running:
            raise RuntimeError("already started")
        self._listener = self._network.listen(self._host, self._requested_port)
        self._running = True
        for target in (self._accept_loop, self._dispatch_loop):
            t = threading.Thread(target=target, daemon=True)
            t.start()
            self._threads.append(t)
        return self

    def stop(self) -> None:
        if not self._running:
            return
        self._running = False
        self._listener.close()
        with self._lock:
            conns = list(self._conns.values())
        for conn in conns:
            conn.close()
        self._events.put(None)
        for t in self._threads:
            t.join(timeout=5.0)
        self._threads.clear()

    # threads

    def _accept_loop(self) -> None:
        while self._running:
            try:
                conn = self._listener.accept()
            except TransportError:
                return
            with self._lock:
                conn_id = self._next_id
                self._next_id += 1
                self._conns[conn_id] = conn
            self._events.put(("open", conn_id))
            t = threading.Thread(
                target=self._read_loop, args=(conn_id, conn), daemon=True
            )
            t.start()

    def _read_loop(self, conn_id: int, conn) -> None:
        while True:
            data = conn.recv()
            if not data:
                self._events.put(("lost", conn_id))
                return
            self._events.put(("data", conn_id, data))

    def _dispatch_loop(self) -> None:
        while self._running:
            try:
                event = self._events.get(timeout=_TICK)
            except queue.Empty:
                event = ()
            if event is None:
                return
            now = self._clock()
            if event:
                kind = event[0]
                if kind == "open":
                    self._core.connection_opened(event[1])
                    actions = []
                elif kind == "data":
                    actions = self._core.data_received(event[1], event[2], now)
                else:
                    self._core.connection_lost(event[1])
                    with self._lock:
                        self._conns.pop(event[1], None)
                    actions = []
                self._perform(actions)
            self._perform(self._core.tick(now))

    def _perform(self, actions) -> None:
        for action in actions:
            with self._lock:
                conn = self._conns.get(action.conn_id)
            if conn is None:
                continue
            if isinstance(action, Send):
                try:
                    conn.send(action.data)
                except TransportError:
                    self._events.put(("lost", action.conn_id))
            elif isinstance(action, Close):
                conn.close()

    def __enter__(self) -> "Broker":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
