"""Transports: real TCP and an in-memory test network, same interface.

A Network gives out listeners and outgoing connections.  Connections
are blocking byte pipes: send(bytes), recv() -> bytes (b"" at EOF),
close().  The memory network adds seeded frame loss and reordering so
delivery guarantees can be exercised without touching real sockets;
frames are whole send() calls, which the shells keep packet-aligned.
"""

from __future__ import annotations

import random
import socket
import threading
from collections import deque


class TransportError(OSError):
    """Connect failed or the endpoint is gone."""


class TcpConnection:
    def __init__(self, sock: socket.socket) -> None:
        self._sock = sock
        sock.settimeout(None)
        self._wlock = threading.Lock()

    def send(self, data: bytes) -> None:
        try:
            with self._wlock:
                self._sock.sendall(data)
        except OSError as exc:
            raise TransportError(str(exc)) from exc

    def recv(self) -> bytes:
        try:
            return self._sock.recv(65536)
        except OSError:
            return b""

    def close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


class TcpListener:
    def __init__(self, host: str, port: int) -> None:
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(32)
        self.port = self._sock.getsockname()[1]

    def accept(self) -> TcpConnection:
        try:
            sock, _ = self._sock.accept()
        except OSError as exc:
            raise TransportError(str(exc)) from exc
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        return TcpConnection(sock)

    def close(self) -> None:
        self._sock.close()


class TcpNetwork:
    def listen(self, host: str, port: int) -> TcpListener:
        return TcpListener(host, port)

    def connect(self, host: str, port: int, timeout: float = 5.0) -> TcpConnection:
        try:
            sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise TransportError(str(exc)) from exc
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        return TcpConnection(sock)


class _Pipe:
    """One direction of a memory connection: a queue of frames."""

    def __init__(self) -> None:
        self.frames: deque[bytes] = deque()
        self.cond = threading.Condition()
        self.open = True

    def put(self, data: bytes, front: bool = False) -> None:
        with self.cond:
            if not self.open:
                return
            if front:
                self.frames.appendleft(data)
            else:
                self.frames.append(data)
            self.cond.notify_all()

    def get(self) -> bytes:
        with self.cond:
            while self.open and not self.frames:
                self.cond.wait()
            if self.frames:
                return self.frames.popleft()
            return b""

    def close(self) -> None:
        with self.cond:
            self.open = False
            self.cond.notify_all()


class MemoryConnection:
    """Impairment is snapshotted at creation: a test can flip the
    network lossy and only connections made from then on suffer."""

    def __init__(self, out_pipe: _Pipe, in_pipe: _Pipe, network: "MemoryNetwork") -> None:
        self._out = out_pipe
        self._in = in_pipe
        self._net = network
        self._loss = network.loss
        self._reorder = network.reorder

    def send(self, data: bytes) -> None:
        if not self._out.open:
            raise TransportError("peer gone")
        if self._loss and self._net._chance(self._loss):
            return
        self._out.put(data, front=bool(self._reorder and self._net._chance(self._reorder)))

    def recv(self) -> bytes:
        return self._in.get()

    def close(self) -> None:
        self._out.close()
        self._in.close()


class MemoryListener:
    def __init__(self, network: "MemoryNetwork", addr: tuple[str, int]) -> None:
        self._net = network
        self._addr = addr
        self._backlog: deque[MemoryConnection] = deque()
        self._cond = threading.Condition()
        self._open = True
        self.port = addr[1]

    def accept(self) -> MemoryConnection:
        with self._cond:
            while self._open and not self._backlog:
                self._cond.wait()
            if not self._open:
                raise TransportError("listener closed")
            return self._backlog.popleft()

    def _offer(self, conn: MemoryConnection) -> bool:
        with self._cond:
            if not self._open:
                return False
            self._backlog.append(conn)
            self._cond.notify_all()
            return True

    def close(self) -> None:
        with self._cond:
            self._open = False
            self._cond.notify_all()
        self._net._unlisten(self._addr, self)


class MemoryNetwork:
    """Loopback network.  loss/reorder are sampled per frame from a
    seeded generator and snapshotted per connection: flipping the dials
    impairs links opened from then on, both directions, while links that
    already exist keep the settings they were born with.  That lets a
    test put one client behind a bad link and watch it through a clean
    one."""

    def __init__(self, loss: float = 0.0, reorder: float = 0.0, seed: int = 0) -> None:
        self.loss = loss
        self.reorder = reorder
        self._rng = random.Random(seed)
        self._rng_lock = threading.Lock()
        self._listeners: dict[tuple[str, int], MemoryListener] = {}
        self._lock = threading.Lock()
        self._next_port = 49152

    def listen(self, host: str, port: int) -> MemoryListener:
        with self._lock:
            if port == 0:
                port = self._next_port
                self._next_port += 1
            addr = (host, port)
            if addr in self._listeners:
                raise TransportError(f"{addr} already in use")
            listener = MemoryListener(self, addr)
            self._listeners[addr] = listener
            return listener

    def connect(self, host: str, port: int, timeout: float = 5.0) -> MemoryConnection:
        with self._lock:
            listener = self._listeners.get((host, port))
        if listener is None:
            raise TransportError(f"nothing listening on {(host, port)}")
        a_to_b, b_to_a = _Pipe(), _Pipe()
        client = MemoryConnection(a_to_b, b_to_a, self)
        server = MemoryConnection(b_to_a, a_to_b, self)
        if not listener._offer(server):
            raise TransportError("listener closed")
        return client

    def _unlisten(self, addr: tuple[str, int], listener: MemoryListener) -> None:
        with self._lock:
            if self._listeners.get(addr) is listener:
                del self._listeners[addr]

    def _chance(self, p: float) -> bool:
        with self._rng_lock:
            return self._rng.random() < p
