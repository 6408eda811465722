"""Headset API service: JSON-RPC 2.0 over WebSocket plus event streams.

Clients authorize with registered credentials, open sessions, subscribe to
the "com"/"fac"/"eeg"/"pow" streams, and drive profile training. One frame
source feeds one shared DSP pipeline; per-session state is only the profile
and the subscription set, so classification runs per session while the
filter/segmentation front end runs once.

Transport framing is one JSON text message per request, response, or
notification. The service core speaks dicts and is fully testable without
sockets; `CortexServer` is the thin WebSocket adapter.
"""

from __future__ import annotations

import json
import re
import secrets
import threading
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classifier import (
    Profile,
    ProfileFormatError,
    TrainingOrderError,
    TrainingSession,
    UnknownLabelError,
    classify,
    detect_facial,
    load_profile,
    save_profile,
    train_command,
    train_neutral,
)
from .clock import Clock, RealClock
from .dsp import EegFrame, frames_to_array
from .pipeline import PipelineConfig, ProcessedWindow, StreamPipeline
from .synth import ScenarioError
from .vocab import MENTAL_VOCABULARY, NEUTRAL

DEFAULT_PORT = 6868

# JSON-RPC 2.0 standard codes
PARSE_ERROR = -32700
INVALID_REQUEST = -32600
METHOD_NOT_FOUND = -32601
INVALID_PARAMS = -32602
INTERNAL_ERROR = -32603

# Application codes (-32001 .. -32010 reserved for this service)
UNKNOWN_CLIENT = -32001
BAD_SECRET = -32002
BAD_TOKEN = -32003
TRAINING_ORDER = -32004
INJECTION_FAILED = -32005

TOKEN_TTL_S = 3600.0
STREAMS = ("com", "fac", "eeg", "pow")
#: Streams that may be dropped under backpressure. com/fac never are.
SHEDDABLE = frozenset({"eeg", "pow"})

_NAME_RE = re.compile(r"^[A-Za-z0-9_-]+$")


class RpcError(Exception):
    """Raised by handlers; becomes a JSON-RPC error response."""

    def __init__(self, code: int, message: str) -> None:
        super().__init__(message)
        self.code = code
        self.message = message


@dataclass(frozen=True)
class Credentials:
    app_name: str
    client_id: str
    client_secret: str

    def __post_init__(self) -> None:
        for name in ("app_name", "client_id", "client_secret"):
            value = getattr(self, name)
            if not isinstance(value, str) or not value:
                raise ValueError(f"{name} must be a non-empty string")


@dataclass
class AuthToken:
    value: str
    issued_at: float
    ttl: float = TOKEN_TTL_S

    def expired(self, now: float) -> bool:
        return now >= self.issued_at + self.ttl


@dataclass(frozen=True)
class CortexConfig:
    credentials: tuple[Credentials, ...] = ()
    host: str = "127.0.0.1"
    port: int = DEFAULT_PORT
    token_ttl: float = TOKEN_TTL_S
    profile_dir: str | None = None
    allow_injection: bool = False
    queue_capacity: int = 512
    #: Samples per pump iteration; 16 at 128 Hz is a 125 ms cadence.
    block_samples: int = 16
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)


class EventQueue:
    """Bounded outbox. When full, the oldest sheddable (eeg/pow) message is
    evicted first; control messages (responses, com, fac) are never dropped
    and may overfill the queue rather than be lost."""

    def __init__(self, capacity: int = 512) -> None:
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self._items: deque[tuple[str | None, str]] = deque()
        self._capacity = capacity
        self._cond = threading.Condition()
        self._closed = False
        self.dropped = 0

    @property
    def closed(self) -> bool:
        return self._closed

    def __len__(self) -> int:
        with self._cond:
            return len(self._items)

    def push(self, stream: str | None, text: str) -> bool:
        with self._cond:
            if self._closed:
                return False
            if len(self._items) >= self._capacity:
                for i, (s, _) in enumerate(self._items):
                    if s in SHEDDABLE:
                        del self._items[i]
                        self.dropped += 1
                        break
                else:
                    if stream in SHEDDABLE:
                        self.dropped += 1
                        return False
            self._items.append((stream, text))
            self._cond.notify()
            return True

    def pop(self, timeout: float | None = None) -> tuple[str | None, str] | None:
        with self._cond:
            if not self._items:
                self._cond.wait(timeout)
            if not self._items:
                return None
            return self._items.popleft()

    def drain(self) -> list[tuple[str | None, str]]:
        with self._cond:
            items = list(self._items)
            self._items.clear()
            return items

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()


class ClientChannel:
    """One connected client: its outbox and the sessions it owns."""

    def __init__(self, capacity: int = 512) -> None:
        self.queue = EventQueue(capacity)
        self.session_ids: set[str] = set()


@dataclass
class Session:
    id: str
    token: str
    channel: ClientChannel
    subscriptions: set[str] = field(default_factory=set)
    profile: Profile | None = None
    training: TrainingSession | None = None
    #: First pipeline window index the active recording may use.
    training_from: int = 0


class ReplaySource:
    """Frame source over a prerecorded stream."""

    def __init__(self, frames: list[EegFrame], sample_rate: int = 128) -> None:
        self._data = frames_to_array(frames)
        self._fs = sample_rate
        self._pos = 0

    @property
    def sample_rate(self) -> int:
        return self._fs

    @property
    def position_s(self) -> float:
        return self._pos / self._fs

    @property
    def exhausted(self) -> bool:
        return self._pos >= self._data.shape[1]

    def read(self, count: int) -> np.ndarray:
        block = self._data[:, self._pos : self._pos + count]
        self._pos += block.shape[1]
        return block


class CortexService:
    """Application core: auth, sessions, training, and the stream pump."""

    def __init__(self, config: CortexConfig, source=None, clock: Clock | None = None):
        self.config = config
        self.clock: Clock = clock if clock is not None else RealClock()
        self._source = source
        self._source_lock = threading.Lock()
        self._lock = threading.Lock()
        self._tokens: dict[str, AuthToken] = {}
        self._sessions: dict[str, Session] = {}
        self._pump_thread: threading.Thread | None = None
        self._stop = threading.Event()
        self._ended = threading.Event()
        self._window_count = 0

    # -- connection lifecycle ------------------------------------------

    def connect(self) -> ClientChannel:
        return ClientChannel(self.config.queue_capacity)

    def disconnect(self, channel: ClientChannel) -> None:
        with self._lock:
            for sid in channel.session_ids:
                self._sessions.pop(sid, None)
            channel.session_ids.clear()
        channel.queue.close()

    # -- JSON-RPC framing ----------------------------------------------

    def handle_text(self, channel: ClientChannel, text: str | bytes) -> None:
        """Parse one wire message, dispatch, enqueue the response (if any)."""
        if isinstance(text, bytes):
            try:
                text = text.decode("utf-8")
            except UnicodeDecodeError:
                self._enqueue_response(channel, _error_response(None, PARSE_ERROR, "invalid UTF-8"))
                return
        try:
            request = json.loads(text)
        except json.JSONDecodeError as exc:
            self._enqueue_response(channel, _error_response(None, PARSE_ERROR, f"parse error: {exc.msg}"))
            return
        response = self.handle_request(channel, request)
        if response is not None:
            self._enqueue_response(channel, response)

    def handle_request(self, channel: ClientChannel, request) -> dict | None:
        """Dispatch one parsed request. Returns the response dict, or None
        for a notification (request without an id)."""
        if not isinstance(request, dict):
            return _error_response(None, INVALID_REQUEST, "request must be an object")
        req_id = request.get("id")
        if not isinstance(req_id, (str, int, float, type(None))):
            return _error_response(None, INVALID_REQUEST, "invalid request id")
        has_id = "id" in request
        if request.get("jsonrpc") != "2.0":
            return _error_response(req_id, INVALID_REQUEST, "jsonrpc must be \"2.0\"") if has_id else None
        method = request.get("method")
        if not isinstance(method, str):
            return _error_response(req_id, INVALID_REQUEST, "method must be a string") if has_id else None
        params = request.get("params", {})
        try:
            if not isinstance(params, dict):
                raise RpcError(INVALID_PARAMS, "params must be an object")
            result = self._dispatch(channel, method, params)
            response = {"jsonrpc": "2.0", "id": req_id, "result": result}
        except RpcError as exc:
            response = _error_response(req_id, exc.code, exc.message)
        except Exception as exc:  # pragma: no cover - defensive
            response = _error_response(req_id, INTERNAL_ERROR, f"internal error: {exc}")
        return response if has_id else None

    def _enqueue_response(self, channel: ClientChannel, response: dict) -> None:
        channel.queue.push(None, json.dumps(response))

    def _dispatch(self, channel: ClientChannel, method: str, params: dict):
        if method == "authorize":
            return self._rpc_authorize(params)
        if method == "inject" and not self.config.allow_injection:
            # behaves as if absent when the config flag is off
            raise RpcError(METHOD_NOT_FOUND, "unknown method 'inject'")
        handlers = {
            "createSession": self._rpc_create_session,
            "subscribe": self._rpc_subscribe,
            "training": self._rpc_training,
            "queryTraining": self._rpc_query_training,
            "setupProfile": self._rpc_setup_profile,
            "queryProfile": self._rpc_query_profile,
            "inject": self._rpc_inject,
        }
        handler = handlers.get(method)
        if handler is None:
            raise RpcError(METHOD_NOT_FOUND, f"unknown method {method!r}")
        # every method except authorize requires a live token, checked
        # before any other parameter so bad tokens can't probe anything
        self._check_token(params.get("cortexToken"))
        return handler(channel, params)

    # -- auth ----------------------------------------------------------

    def _rpc_authorize(self, params: dict) -> dict:
        app_name = params.get("appName")
        client_id = params.get("clientId")
        client_secret = params.get("clientSecret")
        for label, value in (("appName", app_name), ("clientId", client_id), ("clientSecret", client_secret)):
            if not isinstance(value, str) or not value:
                raise RpcError(INVALID_PARAMS, f"{label} must be a non-empty string")
        match = next((c for c in self.config.credentials if c.client_id == client_id), None)
        if match is None:
            raise RpcError(UNKNOWN_CLIENT, "unknown client id")
        if client_secret != match.client_secret:
            raise RpcError(BAD_SECRET, "client secret does not match")
        if app_name != match.app_name:
            raise RpcError(BAD_SECRET, "application name does not match")
        token = AuthToken(secrets.token_hex(16), self.clock.now(), self.config.token_ttl)
        with self._lock:
            self._tokens[token.value] = token
        return {"cortexToken": token.value}

    def _check_token(self, value) -> None:
        if not isinstance(value, str):
            raise RpcError(BAD_TOKEN, "missing or invalid cortexToken")
        with self._lock:
            token = self._tokens.get(value)
            if token is None:
                raise RpcError(BAD_TOKEN, "unknown token")
            if token.expired(self.clock.now()):
                del self._tokens[value]
                raise RpcError(BAD_TOKEN, "token expired")

    # -- sessions ------------------------------------------------------

    def _rpc_create_session(self, channel: ClientChannel, params: dict) -> dict:
        session = Session(id=secrets.token_hex(8), token=params["cortexToken"], channel=channel)
        with self._lock:
            self._sessions[session.id] = session
            channel.session_ids.add(session.id)
        return {"id": session.id}

    def _get_session(self, channel: ClientChannel, params: dict) -> Session:
        sid = params.get("session")
        with self._lock:
            session = self._sessions.get(sid) if isinstance(sid, str) else None
        if session is None or session.channel is not channel:
            raise RpcError(INVALID_PARAMS, "unknown session")
        return session

    def _rpc_subscribe(self, channel: ClientChannel, params: dict) -> dict:
        session = self._get_session(channel, params)
        streams = params.get("streams")
        if not isinstance(streams, list):
            raise RpcError(INVALID_PARAMS, "streams must be a list")
        success, failure = [], []
        for name in streams:
            if isinstance(name, str) and name in STREAMS:
                session.subscriptions.add(name)
                success.append(name)
            else:
                failure.append(name)
        return {"success": success, "failure": failure}

    # -- profiles ------------------------------------------------------

    def _profile_path(self, name: str) -> Path:
        if self.config.profile_dir is None:
            raise RpcError(INVALID_PARAMS, "no profile directory configured")
        if not _NAME_RE.match(name):
            raise RpcError(INVALID_PARAMS, "profile name must match [A-Za-z0-9_-]+")
        return Path(self.config.profile_dir) / f"{name}.json"

    def _rpc_setup_profile(self, channel: ClientChannel, params: dict) -> dict:
        session = self._get_session(channel, params)
        status = params.get("status")
        if status not in ("create", "load", "save", "unload"):
            raise RpcError(INVALID_PARAMS, "status must be create|load|save|unload")
        if status == "unload":
            session.profile = None
            session.training = None
            return {"status": status, "name": None}
        if status == "save":
            if session.profile is None:
                raise RpcError(TRAINING_ORDER, "no profile loaded")
            path = self._profile_path(session.profile.name)
            path.parent.mkdir(parents=True, exist_ok=True)
            save_profile(session.profile, path)
            return self._profile_report(status, session.profile)
        name = params.get("name")
        if not isinstance(name, str) or not _NAME_RE.match(name):
            raise RpcError(INVALID_PARAMS, "profile name must match [A-Za-z0-9_-]+")
        if status == "create":
            session.profile = Profile(name=name)
        else:  # load
            path = self._profile_path(name)
            if not path.exists():
                raise RpcError(INVALID_PARAMS, f"no profile named {name!r}")
            try:
                session.profile = load_profile(path)
            except ProfileFormatError as exc:
                raise RpcError(INVALID_PARAMS, str(exc)) from exc
        session.training = None
        return self._profile_report(status, session.profile)

    def _rpc_query_profile(self, channel: ClientChannel, params: dict) -> dict:
        session = self._get_session(channel, params)
        if session.profile is None:
            return {"name": None, "neutralTrained": False, "trainedLabels": []}
        return self._profile_report(None, session.profile)

    @staticmethod
    def _profile_report(status: str | None, profile: Profile) -> dict:
        report = {
            "name": profile.name,
            "neutralTrained": profile.neutral_trained,
            "trainedLabels": sorted(profile.trained_labels),
        }
        if status is not None:
            report["status"] = status
        return report

    # -- training ------------------------------------------------------

    def _rpc_training(self, channel: ClientChannel, params: dict) -> dict:
        session = self._get_session(channel, params)
        status = params.get("status")
        if status not in ("start", "accept", "reject"):
            raise RpcError(INVALID_PARAMS, "status must be start|accept|reject")
        if session.profile is None:
            raise RpcError(TRAINING_ORDER, "no profile loaded")
        try:
            if status == "start":
                label = params.get("label")
                if not isinstance(label, str) or label not in MENTAL_VOCABULARY:
                    raise RpcError(INVALID_PARAMS, f"label must be one of {sorted(MENTAL_VOCABULARY)}")
                if session.training is not None and session.training.state in ("recording", "ready"):
                    session.training.mark_rejected()  # restarting discards the old take
                with self._lock:
                    start_index = self._window_count
                session.training = TrainingSession(profile_name=session.profile.name, label=label)
                session.training_from = start_index
            elif session.training is None:
                raise RpcError(TRAINING_ORDER, "no training recording to act on")
            elif status == "accept":
                session.training.mark_accepted()
                training = session.training
                if training.label == NEUTRAL:
                    session.profile = train_neutral(session.profile, training.windows)
                else:
                    session.profile = train_command(session.profile, training.label, training.windows)
            else:  # reject
                session.training.mark_rejected()
        except TrainingOrderError as exc:
            raise RpcError(TRAINING_ORDER, str(exc)) from exc
        except UnknownLabelError as exc:
            raise RpcError(INVALID_PARAMS, str(exc)) from exc
        return self._training_report(session)

    def _rpc_query_training(self, channel: ClientChannel, params: dict) -> dict:
        session = self._get_session(channel, params)
        return self._training_report(session)

    @staticmethod
    def _training_report(session: Session) -> dict:
        if session.training is None:
            return {"label": None, "state": "idle", "windows": 0}
        return {
            "label": session.training.label,
            "state": session.training.state,
            "windows": len(session.training.windows),
        }

    # -- injection -----------------------------------------------------

    def _rpc_inject(self, channel: ClientChannel, params: dict) -> dict:
        kind = params.get("kind")
        label = params.get("label")
        duration = params.get("duration")
        if not isinstance(kind, str) or not isinstance(label, str):
            raise RpcError(INVALID_PARAMS, "kind and label must be strings")
        if not isinstance(duration, (int, float)) or duration <= 0:
            raise RpcError(INVALID_PARAMS, "duration must be a positive number")
        inject = getattr(self._source, "inject", None)
        if inject is None:
            raise RpcError(INJECTION_FAILED, "frame source does not support injection")
        with self._source_lock:
            try:
                start = inject(kind, label, float(duration))
            except (ScenarioError, ValueError) as exc:
                raise RpcError(INJECTION_FAILED, str(exc)) from exc
        return {"start": start}

    # -- stream pump ---------------------------------------------------

    def start_stream(self) -> None:
        if self._source is None:
            raise RuntimeError("no frame source configured")
        if self._pump_thread is not None:
            raise RuntimeError("stream already started")
        self._pump_thread = threading.Thread(target=self._pump, name="cortex-pump", daemon=True)
        self._pump_thread.start()

    def stop_stream(self) -> None:
        self._stop.set()
        if self._pump_thread is not None:
            self._pump_thread.join(timeout=5.0)

    def wait_stream_end(self, timeout: float | None = None) -> bool:
        return self._ended.wait(timeout)

    @property
    def stream_ended(self) -> bool:
        return self._ended.is_set()

    def _pump(self) -> None:
        pipe = StreamPipeline(self.config.pipeline)
        fs = self._source.sample_rate
        last_time = 0.0
        while not self._stop.is_set():
            with self._source_lock:
                if self._source.exhausted:
                    break
                block = self._source.read(self.config.block_samples)
            n = block.shape[1]
            if n == 0:
                break
            windows, eeg_frames = pipe.push(block, emit_eeg=True)
            for t, values in eeg_frames:
                self._emit_shared("eeg", t, [float(v) for v in values])
                last_time = t
            for w in windows:
                self._emit_window(w)
                last_time = max(last_time, w.end_time)
            with self._lock:
                if windows:
                    self._window_count = windows[-1].index + 1
            self.clock.sleep(n / fs)
        self._broadcast({"jsonrpc": "2.0", "method": "streamEnd", "params": {"time": last_time}})
        self._ended.set()

    def _sessions_snapshot(self) -> list[Session]:
        with self._lock:
            return list(self._sessions.values())

    def _emit_shared(self, stream: str, time_s: float, data: list) -> None:
        """One event, identical for every session; sent once per channel."""
        text = _event_text(stream, time_s, data)
        seen: set[int] = set()
        for session in self._sessions_snapshot():
            if stream in session.subscriptions and id(session.channel) not in seen:
                seen.add(id(session.channel))
                session.channel.queue.push(stream, text)

    def _emit_window(self, w: ProcessedWindow) -> None:
        sessions = self._sessions_snapshot()
        for session in sessions:
            training = session.training
            if training is not None and training.state == "recording" and w.index >= session.training_from:
                training.add_window(w.features)
        fac = detect_facial(w.window, window_start=w.start_time)
        self._emit_shared("fac", w.end_time, [fac.label, fac.power])
        self._emit_shared("pow", w.end_time, [float(p) for p in w.powers.ravel()])
        for session in sessions:
            if "com" not in session.subscriptions:
                continue
            profile = session.profile
            if profile is None or not profile.neutral_trained:
                continue
            if profile.centroids:
                det = classify(profile, w.features, window_start=w.start_time)
                label, power = det.label, det.power
            else:
                # baseline only: nothing to match against, every window is neutral
                label, power = NEUTRAL, 0.0
            text = _event_text("com", w.end_time, [label, power])
            session.channel.queue.push("com", text)

    def _broadcast(self, message: dict) -> None:
        text = json.dumps(message)
        seen: set[int] = set()
        for session in self._sessions_snapshot():
            if id(session.channel) not in seen:
                seen.add(id(session.channel))
                session.channel.queue.push(None, text)


def _event_text(stream: str, time_s: float, data: list) -> str:
    return json.dumps(
        {"jsonrpc": "2.0", "method": "event", "params": {"stream": stream, "time": time_s, "data": data}}
    )


def _error_response(req_id, code: int, message: str) -> dict:
    return {"jsonrpc": "2.0", "id": req_id, "error": {"code": code, "message": message}}


class CortexServer:
    """WebSocket front end for a CortexService."""

    def __init__(self, service: CortexService, host: str | None = None, port: int | None = None):
        from websockets.sync.server import serve

        self.service = service
        host = host if host is not None else service.config.host
        port = port if port is not None else service.config.port
        self._server = serve(self._handler, host, port)
        self.port: int = self._server.socket.getsockname()[1]
        self._thread: threading.Thread | None = None
        self._conns: set = set()
        self._conns_lock = threading.Lock()

    def start(self) -> int:
        self._thread = threading.Thread(target=self._server.serve_forever, name="cortex-ws", daemon=True)
        self._thread.start()
        return self.port

    def close(self) -> None:
        # stop accepting, then sever live clients so they can fail over
        self._server.shutdown()
        with self._conns_lock:
            conns = list(self._conns)
        for conn in conns:
            try:
                conn.close()
            except Exception:
                pass
        if self._thread is not None:
            self._thread.join(timeout=5.0)

    def _handler(self, conn) -> None:
        with self._conns_lock:
            self._conns.add(conn)
        channel = self.service.connect()
        sender = threading.Thread(target=self._drain, args=(channel, conn), daemon=True)
        sender.start()
        try:
            for message in conn:
                self.service.handle_text(channel, message)
        except Exception:
            pass
        finally:
            with self._conns_lock:
                self._conns.discard(conn)
            self.service.disconnect(channel)
            sender.join(timeout=2.0)

    @staticmethod
    def _drain(channel: ClientChannel, conn) -> None:
        while True:
            item = channel.queue.pop(timeout=0.25)
            if item is None:
                if channel.queue.closed:
                    return
                continue
            try:
                conn.send(item[1])
            except Exception:
                return
