"""Event-to-command bridge between the headset service and the drone.

Subscribes to the classified mental (com) and facial (fac) streams,
debounces them against a mapping config, and publishes drone command
messages over MQTT.  Mental commands must clear a power threshold and
arrive over consecutive windows before anything is sent; facial
triggers bypass the hold entirely because they are the safety path.
"""

from __future__ import annotations

import json
import math
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import IO, Mapping

from .classifier import Detection
from .cortex import Credentials, RpcError
from .dsp import WINDOW_SECONDS
from .mqtt import MqttClient
from .vocab import FACIAL_EXPRESSIONS, MENTAL_COMMANDS, NEUTRAL

#: Exact wire strings; the receiving side matches case-sensitively.
DRONE_MESSAGES = ("Fw", "Bw", "Left", "Right", "Up", "Down", "stop")

COMMAND_TOPIC = "drone/cmd"

#: Minimum spacing between repeated emissions of the same message.
REPEAT_HOLD_S = 2.0

DEFAULT_MENTAL_MAP = {
    "push": "Fw",
    "pull": "Bw",
    "left": "Left",
    "right": "Right",
    "lift": "Up",
    "drop": "Down",
}

DEFAULT_FACIAL_MAP = {
    "blink": "stop",
}


class BridgeConfigError(RuntimeError):
    """The bridge cannot start as configured (bad creds, untrained profile)."""


class LinkLost(ConnectionError):
    """The headset service connection died mid-stream."""


@dataclass(frozen=True)
class MappingConfig:
    mental_map: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_MENTAL_MAP))
    facial_map: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_FACIAL_MAP))
    power_threshold: float = 0.5
    hold_windows: int = 2

    def __post_init__(self) -> None:
        for name, table, vocab in (
            ("mental_map", self.mental_map, MENTAL_COMMANDS),
            ("facial_map", self.facial_map, FACIAL_EXPRESSIONS),
        ):
            for label, message in table.items():
                if label == NEUTRAL:
                    raise ValueError(f"{name}: {NEUTRAL!r} cannot map to a command")
                if label not in vocab:
                    raise ValueError(f"{name}: unknown label {label!r}")
                if message not in DRONE_MESSAGES:
                    raise ValueError(f"{name}: {message!r} is not a drone message")
        if not 0.0 <= self.power_threshold <= 1.0:
            raise ValueError(f"power_threshold must be in [0,1], got {self.power_threshold}")
        if self.hold_windows < 1:
            raise ValueError(f"hold_windows must be >= 1, got {self.hold_windows}")


def mapping_from_json(text: str) -> MappingConfig:
    """Parse a mapping config from its JSON file form.

    Absent keys fall back to the defaults, so a config file can override
    just the threshold, or just one map.
    """
    raw = json.loads(text)
    if not isinstance(raw, dict):
        raise ValueError("mapping config must be a JSON object")
    kwargs = {}
    for key in ("mental_map", "facial_map"):
        if key in raw:
            table = raw[key]
            if not isinstance(table, dict):
                raise ValueError(f"{key} must be an object")
            kwargs[key] = {str(k): str(v) for k, v in table.items()}
    for key in ("power_threshold", "hold_windows"):
        if key in raw:
            kwargs[key] = raw[key]
    return MappingConfig(**kwargs)


@dataclass
class BridgeState:
    """Debounce bookkeeping for the mental path.

    last_emitted/last_emit_time remember the most recent mental emission
    so a label that re-forms after an interruption still honors the
    repeat hold; facial emissions do not touch them.
    """

    last_label: str | None = None
    consecutive_count: int = 0
    last_emitted: str | None = None
    last_emit_time: float = -math.inf
    streak_emitted: bool = False
    unmapped_count: int = 0


def on_event(state: BridgeState, det: Detection, config: MappingConfig) -> dict:
    """Advance the bridge by one classified window.

    Returns the decision record for the JSONL log; record["message"] is
    the drone message to publish, or None.  Mental rules: a mapped label
    at power >= threshold must hold for hold_windows consecutive com
    windows, emits once per streak, and the same message is never
    repeated within REPEAT_HOLD_S.  Facial rules: mapped labels emit on
    every window, immediately.
    """
    t = det.window_start
    record = {
        "window_start": t,
        "stream": det.kind,
        "label": det.label,
        "power": det.power,
        "message": None,
        "count": 0,
    }

    if det.kind == "fac":
        if det.label == NEUTRAL:
            record["decision"] = "neutral"
            return record
        message = config.facial_map.get(det.label)
        if message is None:
            state.unmapped_count += 1
            record["decision"] = "unmapped"
            return record
        record["decision"] = "emit"
        record["message"] = message
        return record

    if det.label != state.last_label:
        state.last_label = det.label
        state.consecutive_count = 0
        state.streak_emitted = False
    if det.label == NEUTRAL:
        record["decision"] = "neutral"
        return record
    if det.power < config.power_threshold:
        # a dip ends the streak; the next strong window starts a new one
        state.consecutive_count = 0
        state.streak_emitted = False
        record["decision"] = "below_threshold"
        return record

    state.consecutive_count += 1
    record["count"] = state.consecutive_count
    message = config.mental_map.get(det.label)
    if message is None:
        state.unmapped_count += 1
        record["decision"] = "unmapped"
        return record
    if state.consecutive_count < config.hold_windows:
        record["decision"] = "hold"
        return record
    if state.streak_emitted:
        record["decision"] = "suppressed"
        return record
    if state.last_emitted == message and t - state.last_emit_time < REPEAT_HOLD_S:
        record["decision"] = "suppressed"
        return record

    state.streak_emitted = True
    state.last_emitted = message
    state.last_emit_time = t
    record["decision"] = "emit"
    record["message"] = message
    return record


class CortexLink:
    """Single-threaded JSON-RPC client over one websocket.

    Responses and event notifications share the wire: call() buffers any
    events seen while waiting for its response, and next_event() drains
    that buffer before touching the socket again.
    """

    def __init__(self, conn) -> None:
        self._conn = conn
        self._events: deque[dict] = deque()
        self._next_id = 0

    @classmethod
    def open(cls, url: str, timeout: float = 5.0) -> "CortexLink":
        from websockets.sync.client import connect

        try:
            return cls(connect(url, open_timeout=timeout))
        except Exception as exc:
            raise LinkLost(f"cannot reach {url}: {exc}") from exc

    def call(self, method: str, params: dict, timeout: float = 5.0) -> dict:
        self._next_id += 1
        req = {"jsonrpc": "2.0", "id": self._next_id, "method": method, "params": params}
        self._send(json.dumps(req))
        while True:
            msg = self._recv(timeout)
            if msg.get("id") == self._next_id:
                if "error" in msg:
                    raise RpcError(msg["error"]["code"], msg["error"]["message"])
                return msg["result"]
            if msg.get("method") == "event":
                self._events.append(msg)

    def next_event(self, timeout: float) -> dict:
        """Next event notification; raises TimeoutError if none arrives."""
        while True:
            if self._events:
                return self._events.popleft()
            msg = self._recv(timeout)
            if msg.get("method") == "event":
                return msg

    def close(self) -> None:
        try:
            self._conn.close()
        except Exception:
            pass

    def _send(self, text: str) -> None:
        try:
            self._conn.send(text)
        except Exception as exc:
            raise LinkLost(str(exc)) from exc

    def _recv(self, timeout: float) -> dict:
        try:
            text = self._conn.recv(timeout=timeout)
        except TimeoutError:
            raise
        except Exception as exc:
            raise LinkLost(str(exc)) from exc
        try:
            msg = json.loads(text)
        except json.JSONDecodeError as exc:
            raise LinkLost(f"garbled frame: {exc.msg}") from exc
        return msg if isinstance(msg, dict) else {}


def _handshake(link: CortexLink, credentials: Credentials, profile: str) -> None:
    token = link.call(
        "authorize",
        {
            "appName": credentials.app_name,
            "clientId": credentials.client_id,
            "clientSecret": credentials.client_secret,
        },
    )["cortexToken"]
    sid = link.call("createSession", {"cortexToken": token})["id"]
    report = link.call(
        "setupProfile",
        {"cortexToken": token, "session": sid, "status": "load", "name": profile},
    )
    if not report["neutralTrained"] or not report["trainedLabels"]:
        raise BridgeConfigError(
            f"profile {profile!r} has no trained commands; train it before bridging"
        )
    link.call(
        "subscribe", {"cortexToken": token, "session": sid, "streams": ["com", "fac"]}
    )


def _detection_from_event(params: dict) -> Detection | None:
    stream = params.get("stream")
    if stream not in ("com", "fac"):
        return None
    data = params.get("data")
    time_s = params.get("time")
    if not isinstance(data, list) or len(data) != 2 or not isinstance(time_s, (int, float)):
        return None
    label, power = data
    if not isinstance(label, str) or not isinstance(power, (int, float)):
        return None
    # events are stamped with the window's end; recover its start
    return Detection(
        kind=stream,
        label=label,
        power=min(max(float(power), 0.0), 1.0),
        window_start=float(time_s) - WINDOW_SECONDS,
    )


def run_bridge(
    cortex_url: str,
    credentials: Credentials,
    profile: str,
    mapping: MappingConfig | None = None,
    broker_host: str = "127.0.0.1",
    broker_port: int = 1883,
    network=None,
    log: IO[str] | None = None,
    stop: threading.Event | None = None,
    backoff_base: float = 0.5,
    backoff_cap: float = 10.0,
) -> BridgeState:
    """Run the bridge until stop is set.

    Connects to the headset service, validates that the named profile is
    trained (raises BridgeConfigError otherwise), then turns com/fac
    events into publishes on drone/cmd at qos 1.  If the service
    connection dies, publishes a single "stop" failsafe and reconnects
    with backoff.  Every decision goes to the JSONL log stream.
    """
    mapping = mapping if mapping is not None else MappingConfig()
    stop = stop if stop is not None else threading.Event()
    state = BridgeState()

    def write_log(row: dict) -> None:
        if log is not None:
            log.write(json.dumps(row) + "\n")
            log.flush()

    # Validate configuration against the service before touching the
    # broker, so a misconfigured bridge fails fast with nothing emitted.
    link = _open_validated(cortex_url, credentials, profile, stop, backoff_base, backoff_cap)
    if link is None:  # stop was set while the service was unreachable
        return state

    client = MqttClient(
        f"bridge-{profile}", network=network, host=broker_host, port=broker_port
    )
    _connect_with_retry(client, stop, backoff_base, backoff_cap)
    try:
        backoff = backoff_base
        while not stop.is_set():
            if link is None:
                link = _open_validated(
                    cortex_url, credentials, profile, stop, backoff_base, backoff_cap
                )
                if link is None:
                    break
                backoff = backoff_base
            try:
                while not stop.is_set():
                    try:
                        event = link.next_event(timeout=0.25)
                    except TimeoutError:
                        continue
                    det = _detection_from_event(event.get("params", {}))
                    if det is None:
                        continue
                    row = on_event(state, det, mapping)
                    if row["message"] is not None:
                        client.publish(COMMAND_TOPIC, row["message"], qos=1)
                    write_log(row)
            except LinkLost:
                link.close()
                link = None
                if stop.is_set():
                    break
                # failsafe: the classified stream is gone, ground the drone
                client.publish(COMMAND_TOPIC, "stop", qos=1)
                write_log({"decision": "failsafe", "message": "stop", "reason": "link lost"})
                stop.wait(backoff)
                backoff = min(backoff * 2, backoff_cap)
    finally:
        if link is not None:
            link.close()
        client.close()
    return state


def _open_validated(
    cortex_url: str,
    credentials: Credentials,
    profile: str,
    stop: threading.Event,
    backoff_base: float,
    backoff_cap: float,
) -> CortexLink | None:
    """Open + handshake, retrying transport failures until stop is set.

    RPC-level rejections (bad credentials, unknown or untrained profile)
    are configuration errors and raise immediately: retrying cannot fix
    them.
    """
    backoff = backoff_base
    while not stop.is_set():
        try:
            link = CortexLink.open(cortex_url)
        except LinkLost:
            stop.wait(backoff)
            backoff = min(backoff * 2, backoff_cap)
            continue
        try:
            _handshake(link, credentials, profile)
            return link
        except BridgeConfigError:
            link.close()
            raise
        except RpcError as exc:
            link.close()
            raise BridgeConfigError(f"service rejected the bridge: {exc}") from exc
        except LinkLost:
            link.close()
            stop.wait(backoff)
            backoff = min(backoff * 2, backoff_cap)
    return None


def _connect_with_retry(
    client: MqttClient, stop: threading.Event, backoff_base: float, backoff_cap: float
) -> None:
    from .mqtt import ConnectError

    backoff = backoff_base
    while not stop.is_set():
        try:
            client.connect()
            return
        except ConnectError:
            stop.wait(backoff)
            backoff = min(backoff * 2, backoff_cap)
