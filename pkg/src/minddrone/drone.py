"""Simulated quadcopter driven by text commands over MQTT.

The vehicle is a five-mode state machine:

    Grounded -> TakingOff -> Hovering <-> Maneuvering -> Landing -> Grounded

with first-order kinematics integrated at a fixed step.  The full edge
set (anything else observed in flight is a bug):

    command edges
      Grounded    --Fw/Bw-->            TakingOff   (translation queued)
      Grounded    --anything else-->    Grounded    (motors stay off)
      TakingOff   --Fw/Bw/Left/Right/
                    Up/Down-->          TakingOff   (replaces the queued move)
      airborne    --Fw/Bw/Left/Right/
                    Up-->               Maneuvering
      airborne    --Down-->             Maneuvering if above hover_altitude,
                                        else Hovering (descent floors there)
      airborne    --stop-->             Landing
    tick edges
      TakingOff   --reach altitude-->   Hovering, or Maneuvering if queued
      Maneuvering --turn timer done-->  Hovering
      Maneuvering --descent floor-->    Hovering
      Maneuvering --quiet 2 s-->        Hovering    (command timeout)
      airborne    --quiet 10 s-->       Landing     (command timeout)
      airborne    --battery <= 5%-->    Landing
      Landing     --reach ground-->     Grounded

"airborne" above means every mode except Grounded, Landing included: a
fresh command during descent aborts the landing, but the battery and
quiet-link failsafes re-force it on the very next tick, so forced
landings stick regardless of incoming traffic.

Velocity components are the commanded translation and are nonzero only
while Maneuvering; the vertical motion of TakingOff and Landing is
implied by the mode (ascent_speed up, descent_speed down).

Both `handle_message` and `tick` are pure (state in, state out) so
trajectories replay bit for bit.  `run_drone` wraps them in a single
loop: commands arriving from the broker queue up and drain at the next
tick boundary before integration, so wire arrival order is preserved
but mid-tick state is never observable.
"""

from __future__ import annotations

import json
import logging
import math
import threading
from collections import deque
from dataclasses import dataclass, replace

from .clock import Clock, RealClock
from .mqtt.client import MqttClient

log = logging.getLogger(__name__)

GROUNDED = "Grounded"
TAKING_OFF = "TakingOff"
HOVERING = "Hovering"
MANEUVERING = "Maneuvering"
LANDING = "Landing"

MODES = (GROUNDED, TAKING_OFF, HOVERING, MANEUVERING, LANDING)

VOCABULARY = ("Fw", "Bw", "Left", "Right", "Up", "Down", "stop")

COMMAND_TOPIC = "drone/cmd"
TELEMETRY_TOPIC = "drone/telemetry"
TELEMETRY_PERIOD_S = 0.1

# Tolerance for "did the integrator reach the target this step".  Keeps
# arrival exact (we clamp onto the target) without an extra tick lost
# to accumulated float error.
_ARRIVE_EPS = 1e-9

_LOW_BATTERY = 0.05
_TURN_DURATION_S = 1.0


@dataclass(frozen=True)
class KinematicsConfig:
    """Speeds, timeouts, and the integration step.  All positive."""

    cruise_speed: float = 0.5  # m/s horizontal
    ascent_speed: float = 0.5  # m/s up
    descent_speed: float = 0.5  # m/s down
    yaw_speed: float = 45.0  # deg/s
    hover_altitude: float = 1.0  # m
    tick: float = 0.05  # s
    cmd_timeout_hover: float = 2.0  # s of silence before levelling off
    cmd_timeout_land: float = 10.0  # s of silence before landing
    battery_drain: float = 0.001  # fraction/s while airborne

    def __post_init__(self) -> None:
        for name in (
            "cruise_speed",
            "ascent_speed",
            "descent_speed",
            "yaw_speed",
            "hover_altitude",
            "tick",
            "cmd_timeout_hover",
            "cmd_timeout_land",
            "battery_drain",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class DroneState:
    """Complete vehicle state at one instant.

    `t` is simulation time in seconds; `yaw` is degrees in [0, 360)
    with positive rates turning right (+x along yaw 0, +y along yaw
    90).  `queued` holds the translation a ground-start Fw/Bw asked
    for, delivered once takeoff tops out; `turn_left_s` counts down a
    timed yaw maneuver.
    """

    mode: str = GROUNDED
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    yaw: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    vz: float = 0.0
    yaw_rate: float = 0.0
    battery: float = 1.0
    last_cmd_time: float = 0.0
    t: float = 0.0
    queued: str | None = None
    turn_left_s: float = 0.0

    @property
    def airborne(self) -> bool:
        return self.mode != GROUNDED

    @property
    def speed(self) -> float:
        return math.sqrt(self.vx * self.vx + self.vy * self.vy + self.vz * self.vz)


def _level(state: DroneState, mode: str = HOVERING) -> DroneState:
    return replace(
        state, mode=mode, vx=0.0, vy=0.0, vz=0.0, yaw_rate=0.0, turn_left_s=0.0
    )


def _heading(yaw_deg: float) -> tuple[float, float]:
    r = math.radians(yaw_deg)
    return math.cos(r), math.sin(r)


def handle_message(state: DroneState, message: str, config: KinematicsConfig) -> DroneState:
    """Apply one command string.

    Unknown payloads return the state untouched: line noise is not
    pilot input, so it must not refresh the silence timers either.
    Commands that cannot act from the current mode (steering while
    grounded, stop while already grounded) are equally inert.
    """
    if message not in VOCABULARY:
        log.warning("ignoring unknown command %r", message)
        return state

    if state.mode == GROUNDED:
        if message in ("Fw", "Bw"):
            return replace(
                state, mode=TAKING_OFF, queued=message, last_cmd_time=state.t
            )
        if message != "stop":
            log.warning("ignoring %s while grounded", message)
        return state  # motors off, nothing to do

    stamped = replace(state, last_cmd_time=state.t)

    if message == "stop":
        return _level(replace(stamped, queued=None), LANDING)

    if state.mode == TAKING_OFF:
        # Still climbing: remember the latest wish instead of lurching
        # sideways at ankle height.
        return replace(stamped, queued=message)

    if message in ("Fw", "Bw"):
        sign = 1.0 if message == "Fw" else -1.0
        hx, hy = _heading(state.yaw)
        return replace(
            stamped,
            mode=MANEUVERING,
            vx=sign * config.cruise_speed * hx,
            vy=sign * config.cruise_speed * hy,
            vz=0.0,
            yaw_rate=0.0,
            turn_left_s=0.0,
        )
    if message in ("Left", "Right"):
        sign = -1.0 if message == "Left" else 1.0
        return replace(
            stamped,
            mode=MANEUVERING,
            vx=0.0,
            vy=0.0,
            vz=0.0,
            yaw_rate=sign * config.yaw_speed,
            turn_left_s=_TURN_DURATION_S,
        )
    if message == "Up":
        return replace(
            stamped,
            mode=MANEUVERING,
            vx=0.0,
            vy=0.0,
            vz=config.ascent_speed,
            yaw_rate=0.0,
            turn_left_s=0.0,
        )
    # Down.  Descent floors at hover altitude; at or below it already,
    # there is nowhere to go, so just level off.
    if state.z <= config.hover_altitude + _ARRIVE_EPS:
        return _level(stamped)
    return replace(
        stamped,
        mode=MANEUVERING,
        vx=0.0,
        vy=0.0,
        vz=-config.descent_speed,
        yaw_rate=0.0,
        turn_left_s=0.0,
    )


def tick(state: DroneState, config: KinematicsConfig) -> DroneState:
    """Advance one integration step of config.tick seconds."""
    if state.mode == GROUNDED:
        return replace(state, t=state.t + config.tick)

    dt = config.tick
    t = state.t + dt
    battery = max(0.0, state.battery - config.battery_drain * dt)
    s = replace(state, t=t, battery=battery)

    # Failsafes come before motion so a dead link or flat battery can
    # never buy itself one more step of travel.  The epsilon keeps
    # accumulated tick error from firing a timeout exactly on its
    # nominal boundary.
    quiet = t - s.last_cmd_time
    if s.mode != LANDING and (
        battery <= _LOW_BATTERY or quiet > config.cmd_timeout_land + _ARRIVE_EPS
    ):
        s = _level(replace(s, queued=None), LANDING)
    elif s.mode == MANEUVERING and quiet > config.cmd_timeout_hover + _ARRIVE_EPS:
        s = _level(s)

    if s.mode == TAKING_OFF:
        z = s.z + config.ascent_speed * dt
        if z < config.hover_altitude - _ARRIVE_EPS:
            return replace(s, z=z)
        queued = s.queued
        s = replace(s, mode=HOVERING, z=config.hover_altitude, queued=None)
        if queued is not None:
            # Deliver the held command now that there is air under us.
            # It re-stamps last_cmd_time: the flight controller only
            # starts acting on it at this moment.
            s = handle_message(s, queued, config)
        return s

    if s.mode == LANDING:
        z = s.z - config.descent_speed * dt
        if z <= _ARRIVE_EPS:
            return replace(s, mode=GROUNDED, z=0.0, queued=None)
        return replace(s, z=z)

    if s.mode == MANEUVERING:
        x = s.x + s.vx * dt
        y = s.y + s.vy * dt
        z = s.z + s.vz * dt
        yaw = (s.yaw + s.yaw_rate * dt) % 360.0
        s = replace(s, x=x, y=y, z=z, yaw=yaw)
        if s.turn_left_s > 0.0:
            left = s.turn_left_s - dt
            if left <= _ARRIVE_EPS:
                return _level(s)
            return replace(s, turn_left_s=left)
        if s.vz < 0.0 and s.z <= config.hover_altitude + _ARRIVE_EPS:
            return _level(replace(s, z=config.hover_altitude))
        return s

    return s  # Hovering holds position


def telemetry_json(state: DroneState) -> str:
    return json.dumps(
        {
            "mode": state.mode,
            "x": state.x,
            "y": state.y,
            "z": state.z,
            "yaw": state.yaw,
            "battery": state.battery,
            "t": state.t,
        },
        sort_keys=True,
    )


def run_drone(
    broker_host: str = "127.0.0.1",
    broker_port: int = 1883,
    config: KinematicsConfig | None = None,
    network=None,
    clock: Clock | None = None,
    stop: threading.Event | None = None,
    max_sim_seconds: float | None = None,
) -> DroneState:
    """Fly the simulated vehicle against a live broker.

    Subscribes to drone/cmd at qos 1, integrates at config.tick, and
    publishes a telemetry JSON row at qos 0 every 100 ms of simulated
    time.  A broker outage does not stop the rotors: the client
    reconnects in the background while ticking continues, which is
    exactly the situation the silence-timeout failsafes exist for.
    """
    config = config or KinematicsConfig()
    clock = clock or RealClock()
    stop = stop or threading.Event()

    inbox: deque[bytes] = deque()  # append in reader thread, drain here

    def on_message(msg) -> None:
        inbox.append(bytes(msg.payload))

    client = MqttClient(
        client_id="drone-sim",
        network=network,
        host=broker_host,
        port=broker_port,
        on_message=on_message,
    )
    client.connect()
    try:
        client.subscribe(COMMAND_TOPIC, qos=1)
    except Exception:
        client.close()
        raise

    state = DroneState()
    ticks_per_report = max(1, round(TELEMETRY_PERIOD_S / config.tick))
    count = 0
    start = clock.now()
    try:
        while not stop.is_set():
            if max_sim_seconds is not None and state.t >= max_sim_seconds:
                break
            while inbox:
                payload = inbox.popleft()
                try:
                    text = payload.decode("utf-8")
                except UnicodeDecodeError:
                    log.warning("ignoring undecodable command %r", payload)
                    continue
                state = handle_message(state, text, config)
            state = tick(state, config)
            count += 1
            if count % ticks_per_report == 0:
                client.publish(TELEMETRY_TOPIC, telemetry_json(state), qos=0)
            # Pace against the clock, not cumulative sleeps, so a slow
            # iteration does not make simulated time lag forever.
            delay = (start + state.t) - clock.now()
            if delay > 0:
                clock.sleep(delay)
    finally:
        client.close()
    return state
