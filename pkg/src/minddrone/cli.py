"""One binary for the whole rig.

Offline work (train, eval) runs the synthesis pipeline in-process with
no sockets.  Live work (run, or the single-role commands) wires the same
modules over real TCP: the headset service streams a scripted scenario,
the bridge turns its detections into broker publishes, and the simulated
drone flies them.

Every option also reads an MB_-prefixed environment variable (MB_SEED,
MB_PROFILE, MB_SCENARIO, ...); an explicit flag wins over the
environment, and a JSON --config file fills anything not given either
way.  All randomness flows from the one seed.
"""

from __future__ import annotations

import errno
import http.server
import json
import logging
import sys
import threading
import time
from dataclasses import dataclass
from functools import partial
from pathlib import Path

import click

from .bridge import BridgeConfigError, MappingConfig, mapping_from_json, run_bridge
from .classifier import TrainingOrderError, load_profile, save_profile
from .clock import RealClock, ScaledClock
from .cortex import DEFAULT_PORT, CortexConfig, CortexServer, CortexService, Credentials
from .drone import COMMAND_TOPIC, KinematicsConfig, run_drone
from .drone import TELEMETRY_TOPIC
from .evaluate import evaluate, render_table, report_json, train_from_script
from .mqtt import Broker, MqttClient
from .scenarios import (
    evaluation_script,
    latency_script,
    neutral_script,
    training_script,
)
from .synth import NoiseModel, SynthSource, load_scenario

log = logging.getLogger(__name__)

#: Single-operator rig: one well-known credential, overridable per config.
DEFAULT_CREDENTIALS = Credentials("minddrone", "local-operator", "local-secret")

DEFAULT_BROKER_ADDR = "127.0.0.1:1883"
DEFAULT_CORTEX_ADDR = f"127.0.0.1:{DEFAULT_PORT}"
DEFAULT_FLOOR = 0.85

ROLES = ("broker", "cortex", "bridge", "drone")

#: Streaming fallback when run is given roles but no scenario: a long
#: quiet stream the operator drives by injecting episodes.
IDLE_STREAM_S = 600.0


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise click.ClickException(f"cannot read config {path}: {exc}")
    if not isinstance(obj, dict):
        raise click.ClickException(f"config {path} must hold a JSON object")
    return obj


def _fill(value, conf: dict, key: str, fallback):
    """Flag (or env) beats config file beats built-in default."""
    if value is not None:
        return value
    if key in conf:
        return conf[key]
    return fallback


def _addr(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise click.ClickException(f"address {text!r} is not host:port")
    return host or "127.0.0.1", int(port)


def resolve_scenario(spec: str, repeats: int = 1):
    """A scenario argument is a JSON file path or a built-in name."""
    path = Path(spec)
    if path.exists():
        return load_scenario(path)
    builders = {
        "train": lambda: training_script(repeats=repeats),
        "benchmark": evaluation_script,
        "latency": latency_script,
        "neutral": neutral_script,
    }
    if spec in builders:
        return builders[spec]()
    raise click.ClickException(
        f"scenario {spec!r} is neither a file nor one of {sorted(builders)}"
    )


def _credentials(conf: dict) -> Credentials:
    cred = conf.get("credentials")
    if cred is None:
        return DEFAULT_CREDENTIALS
    try:
        return Credentials(cred["app_name"], cred["client_id"], cred["client_secret"])
    except (TypeError, KeyError) as exc:
        raise click.ClickException(f"config credentials incomplete: {exc}")


def _guard_port(what: str, port: int, start):
    """Run a socket-binding callable, naming the port if it is taken."""
    try:
        return start()
    except OSError as exc:
        if exc.errno in (errno.EADDRINUSE, errno.EACCES):
            raise click.ClickException(f"{what} port {port} is already in use")
        raise


@click.group()
@click.option("--verbose", is_flag=True, envvar="MB_VERBOSE", help="debug logging to stderr")
def main(verbose: bool) -> None:
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


# -- offline ----------------------------------------------------------


@main.command()
@click.option("--profile", envvar="MB_PROFILE", default=None, help="profile JSON path; extended in place if it exists")
@click.option("--scenario", envvar="MB_SCENARIO", default=None, help="scenario file or built-in name (default: train)")
@click.option("--labels", envvar="MB_LABELS", default=None, help="comma-separated subset of the scenario's labels")
@click.option("--repeats", envvar="MB_REPEATS", type=int, default=None, help="recordings per label for the built-in train scenario")
@click.option("--seed", envvar="MB_SEED", type=int, default=None)
@click.option("--pink", envvar="MB_PINK", type=float, default=None, help="background 1/f amplitude")
@click.option("--white", envvar="MB_WHITE", type=float, default=None, help="sensor noise amplitude")
@click.option("--config", "config_path", envvar="MB_CONFIG", default=None)
def train(profile, scenario, labels, repeats, seed, pink, white, config_path):
    """Record a profile (or extend one) from a scripted scenario."""
    conf = _load_config(config_path)
    profile = _fill(profile, conf, "profile", "profile.json")
    scenario = _fill(scenario, conf, "scenario", "train")
    seed = int(_fill(seed, conf, "seed", 42))
    pink = float(_fill(pink, conf, "pink", 10.0))
    white = float(_fill(white, conf, "white", 1.0))
    repeats = int(_fill(repeats, conf, "repeats", 1))
    labels = _fill(labels, conf, "labels", None)

    script = resolve_scenario(scenario, repeats=repeats)
    noise = NoiseModel(pink_amplitude=pink, white_amplitude=white, seed=seed)
    path = Path(profile)
    existing = load_profile(path) if path.exists() else None
    wanted = None
    if labels:
        wanted = tuple(s.strip() for s in labels.split(",") if s.strip())
    try:
        trained = train_from_script(
            script, labels=wanted, profile=existing, name=path.stem, noise=noise
        )
    except (TrainingOrderError, ValueError) as exc:
        raise click.ClickException(str(exc))
    save_profile(trained, path)
    click.echo(f"profile {path} v{trained.version}")
    for label in sorted(trained.training_windows):
        n = len(trained.training_windows[label])
        click.echo(f"  {label:10s} {n:3d} windows")


@main.command(name="eval")
@click.option("--profile", envvar="MB_PROFILE", default=None)
@click.option("--scenario", envvar="MB_SCENARIO", default=None, help="scenario file or built-in name (default: benchmark)")
@click.option("--report", "report_path", envvar="MB_REPORT", default=None, help="write the JSON report here")
@click.option("--floor", envvar="MB_FLOOR", type=float, default=None, help="exit 0 only if accuracy meets this")
@click.option("--seed", envvar="MB_SEED", type=int, default=None)
@click.option("--pink", envvar="MB_PINK", type=float, default=None)
@click.option("--white", envvar="MB_WHITE", type=float, default=None)
@click.option("--config", "config_path", envvar="MB_CONFIG", default=None)
def eval_cmd(profile, scenario, report_path, floor, seed, pink, white, config_path):
    """Score a trained profile over a labeled scenario, offline."""
    conf = _load_config(config_path)
    profile = _fill(profile, conf, "profile", "profile.json")
    scenario = _fill(scenario, conf, "scenario", "benchmark")
    report_path = _fill(report_path, conf, "report", None)
    floor = float(_fill(floor, conf, "floor", DEFAULT_FLOOR))
    seed = int(_fill(seed, conf, "seed", 42))
    pink = float(_fill(pink, conf, "pink", 10.0))
    white = float(_fill(white, conf, "white", 1.0))

    path = Path(profile)
    if not path.exists():
        raise click.ClickException(f"no profile at {path}; run train first")
    script = resolve_scenario(scenario)
    noise = NoiseModel(pink_amplitude=pink, white_amplitude=white, seed=seed)
    report = evaluate(load_profile(path), script, noise=noise)
    if report_path:
        Path(report_path).write_text(report_json(report))
    click.echo(render_table(report), nl=False)
    if report.accuracy < floor:
        click.echo(
            f"accuracy {report.accuracy:.4f} is below the floor {floor:.2f}",
            err=True,
        )
        sys.exit(1)


# -- live roles -------------------------------------------------------


@dataclass
class RunConfig:
    """What the orchestrator launches and how it is wired."""

    roles: tuple[str, ...] = ROLES
    scenario: str | None = None
    profile: str = "profile.json"
    seed: int = 42
    pink: float = 10.0
    white: float = 1.0
    broker_addr: str = DEFAULT_BROKER_ADDR
    cortex_addr: str = DEFAULT_CORTEX_ADDR
    rate: float = 1.0
    eval_mode: bool = False
    credentials: Credentials = DEFAULT_CREDENTIALS
    mapping: MappingConfig | None = None
    bridge_log: str | None = None
    console_dir: str | None = None
    console_port: int = 8000
    relay_port: int | None = None

    def __post_init__(self) -> None:
        unknown = set(self.roles) - set(ROLES)
        if unknown:
            raise ValueError(f"unknown roles {sorted(unknown)}; pick from {ROLES}")
        if not self.roles and not self.scenario:
            raise ValueError("nothing to do: need at least one role or a scenario")
        if self.rate <= 0:
            raise ValueError("rate must be positive")


class _TelemetryRelay:
    """Mirrors drone/telemetry rows onto a WebSocket for browsers.

    Frames are forwarded verbatim, one WebSocket text message per MQTT
    publish, newest first to every connected page.
    """

    def __init__(self, broker_host: str, broker_port: int, port: int) -> None:
        from websockets.sync.server import serve

        self._conns: set = set()
        self._lock = threading.Lock()
        self._client = MqttClient(
            "telemetry-relay",
            host=broker_host,
            port=broker_port,
            on_message=self._forward,
        )
        self._client.connect()
        self._client.subscribe(TELEMETRY_TOPIC, qos=0)
        self._server = serve(self._handler, "127.0.0.1", port)
        self.port = self._server.socket.getsockname()[1]
        self._thread = threading.Thread(
            target=self._server.serve_forever, name="telemetry-relay", daemon=True
        )
        self._thread.start()

    def _handler(self, conn) -> None:
        with self._lock:
            self._conns.add(conn)
        try:
            for _ in conn:  # browsers only listen; drain until close
                pass
        except Exception:
            pass
        finally:
            with self._lock:
                self._conns.discard(conn)

    def _forward(self, message) -> None:
        text = message.payload.decode("utf-8", "replace")
        with self._lock:
            conns = list(self._conns)
        for conn in conns:
            try:
                conn.send(text)
            except Exception:
                with self._lock:
                    self._conns.discard(conn)

    def close(self) -> None:
        self._client.close()
        self._server.shutdown()
        self._thread.join(timeout=5.0)


def orchestrate(config: RunConfig, stop: threading.Event | None = None):
    """Launch the selected roles in-process and run until the scenario
    stream ends, stop is set, or the operator interrupts.

    Shutdown is ordered: the bridge is silenced first, then a final
    "stop" goes out on drone/cmd so an interrupted flight lands, and the
    drone gets simulated time to reach the ground before teardown.
    Returns the drone's final state when the drone role ran.
    """
    stop = stop if stop is not None else threading.Event()
    bhost, bport = _addr(config.broker_addr)
    chost, cport = _addr(config.cortex_addr)
    clock = RealClock() if config.rate == 1.0 else ScaledClock(config.rate)
    noise = NoiseModel(
        pink_amplitude=config.pink, white_amplitude=config.white, seed=config.seed
    )
    script = (
        resolve_scenario(config.scenario)
        if config.scenario
        else neutral_script(duration=IDLE_STREAM_S)
    )

    broker = None
    service = server = None
    relay = httpd = None
    stop_bridge = threading.Event()
    stop_drone = threading.Event()
    threads: list[threading.Thread] = []
    failures: list[BaseException] = []
    final: dict = {}
    bridge_log = None

    try:
        if "broker" in config.roles:
            broker = Broker(host=bhost, port=bport)
            _guard_port("broker", bport, broker.start)
            log.info("broker on %s:%d", bhost, bport)

        if "cortex" in config.roles:
            source = SynthSource(script, noise=noise)
            cconf = CortexConfig(
                credentials=(config.credentials,),
                host=chost,
                port=cport,
                profile_dir=str(Path(config.profile).resolve().parent),
                allow_injection=not config.eval_mode,
            )
            service = CortexService(cconf, source=source, clock=clock)
            server = _guard_port(
                "cortex", cport, lambda: CortexServer(service, host=chost, port=cport)
            )
            server.start()
            log.info("headset service on ws://%s:%d/", chost, cport)

        if "drone" in config.roles:

            def fly() -> None:
                try:
                    final["state"] = run_drone(
                        broker_host=bhost,
                        broker_port=bport,
                        clock=clock,
                        stop=stop_drone,
                    )
                except BaseException as exc:  # surfaced after join
                    failures.append(exc)

            t = threading.Thread(target=fly, name="drone", daemon=True)
            t.start()
            threads.append(t)

        if "bridge" in config.roles:
            if config.bridge_log:
                bridge_log = open(config.bridge_log, "w", encoding="utf-8")

            def relay_commands() -> None:
                try:
                    run_bridge(
                        cortex_url=f"ws://{chost}:{cport}/",
                        credentials=config.credentials,
                        profile=Path(config.profile).stem,
                        mapping=config.mapping,
                        broker_host=bhost,
                        broker_port=bport,
                        log=bridge_log,
                        stop=stop_bridge,
                    )
                except BaseException as exc:
                    failures.append(exc)

            t = threading.Thread(target=relay_commands, name="bridge", daemon=True)
            t.start()
            threads.append(t)

        if config.relay_port is not None:
            relay = _guard_port(
                "telemetry relay",
                config.relay_port,
                lambda: _TelemetryRelay(bhost, bport, config.relay_port),
            )
            log.info("telemetry relay on ws://127.0.0.1:%d/", relay.port)

        if config.console_dir is not None:
            handler = partial(
                http.server.SimpleHTTPRequestHandler, directory=config.console_dir
            )
            httpd = _guard_port(
                "console",
                config.console_port,
                lambda: http.server.ThreadingHTTPServer(
                    ("127.0.0.1", config.console_port), handler
                ),
            )
            t = threading.Thread(target=httpd.serve_forever, name="console", daemon=True)
            t.start()
            log.info("console on http://127.0.0.1:%d/", config.console_port)

        if service is not None:
            # bridge handshake needs the RPC surface, which is already up
            service.start_stream()

        while not stop.is_set():
            if failures:
                break
            if service is not None and service.stream_ended:
                log.info("scenario stream finished")
                break
            if not any(t.is_alive() for t in threads) and threads:
                break
            time.sleep(0.1)
    except KeyboardInterrupt:
        log.info("interrupted")
    finally:
        stop_bridge.set()
        if "drone" in config.roles or "broker" in config.roles:
            try:
                pilot = MqttClient("orchestrator", host=bhost, port=bport)
                pilot.connect()
                pilot.publish(COMMAND_TOPIC, "stop", qos=1)
                time.sleep(0.2)  # let the puback round-trip finish
                pilot.close()
            except Exception:
                log.warning("could not send the final stop", exc_info=True)
        if "drone" in config.roles:
            defaults = KinematicsConfig()
            grace = defaults.hover_altitude / defaults.descent_speed + 3.0
            deadline = time.monotonic() + grace / config.rate
            while time.monotonic() < deadline:
                state = final.get("state")
                if state is not None:
                    break
                time.sleep(0.05)
        stop_drone.set()
        stop.set()
        for t in threads:
            t.join(timeout=10.0)
        if relay is not None:
            relay.close()
        if httpd is not None:
            httpd.shutdown()
        if server is not None:
            if service is not None:
                service.stop_stream()
            server.close()
        if broker is not None:
            broker.stop()
        if bridge_log is not None:
            bridge_log.close()

    for exc in failures:
        if isinstance(exc, BridgeConfigError):
            raise click.ClickException(str(exc))
    if failures:
        raise click.ClickException(f"role failed: {failures[0]}")
    return final.get("state")


@main.command()
@click.option("--roles", envvar="MB_ROLES", default=None, help="comma list from broker,cortex,bridge,drone (default: all)")
@click.option("--scenario", envvar="MB_SCENARIO", default=None, help="scenario to stream; default is a long neutral stream")
@click.option("--profile", envvar="MB_PROFILE", default=None)
@click.option("--seed", envvar="MB_SEED", type=int, default=None)
@click.option("--pink", envvar="MB_PINK", type=float, default=None)
@click.option("--white", envvar="MB_WHITE", type=float, default=None)
@click.option("--broker-addr", envvar="MB_BROKER_ADDR", default=None)
@click.option("--cortex-addr", envvar="MB_CORTEX_ADDR", default=None)
@click.option("--rate", envvar="MB_RATE", type=float, default=None, help="clock multiplier; 10 runs a 60 s scenario in 6 s")
@click.option("--eval-mode", is_flag=True, default=False, help="lock the stream: episode injection is refused")
@click.option("--bridge-log", envvar="MB_BRIDGE_LOG", default=None, help="bridge decision JSONL file")
@click.option("--console-dir", envvar="MB_CONSOLE_DIR", default=None, help="serve this directory as the operator console")
@click.option("--console-port", envvar="MB_CONSOLE_PORT", type=int, default=None)
@click.option("--relay-port", envvar="MB_RELAY_PORT", type=int, default=None, help="mirror drone/telemetry on this WebSocket port")
@click.option("--config", "config_path", envvar="MB_CONFIG", default=None)
def run(roles, scenario, profile, seed, pink, white, broker_addr, cortex_addr,
        rate, eval_mode, bridge_log, console_dir, console_port, relay_port,
        config_path):
    """Launch live roles wired together and run the scenario to its end."""
    conf = _load_config(config_path)
    roles = _fill(roles, conf, "roles", ",".join(ROLES))
    if isinstance(roles, str):
        roles = tuple(r.strip() for r in roles.split(",") if r.strip())
    mapping = None
    if "mapping" in conf:
        mapping = mapping_from_json(json.dumps(conf["mapping"]))
    try:
        config = RunConfig(
            roles=tuple(roles),
            scenario=_fill(scenario, conf, "scenario", None),
            profile=_fill(profile, conf, "profile", "profile.json"),
            seed=int(_fill(seed, conf, "seed", 42)),
            pink=float(_fill(pink, conf, "pink", 10.0)),
            white=float(_fill(white, conf, "white", 1.0)),
            broker_addr=_fill(broker_addr, conf, "broker_addr", DEFAULT_BROKER_ADDR),
            cortex_addr=_fill(cortex_addr, conf, "cortex_addr", DEFAULT_CORTEX_ADDR),
            rate=float(_fill(rate, conf, "rate", 1.0)),
            eval_mode=bool(eval_mode or conf.get("eval_mode", False)),
            credentials=_credentials(conf),
            mapping=mapping,
            bridge_log=_fill(bridge_log, conf, "bridge_log", None),
            console_dir=_fill(console_dir, conf, "console_dir", None),
            console_port=int(_fill(console_port, conf, "console_port", 8000)),
            relay_port=_fill(relay_port, conf, "relay_port", None),
        )
    except ValueError as exc:
        raise click.ClickException(str(exc))
    state = orchestrate(config)
    if state is not None:
        click.echo(f"drone final: mode={state.mode} z={state.z:.2f} t={state.t:.1f}")


@main.command()
@click.option("--broker-addr", envvar="MB_BROKER_ADDR", default=DEFAULT_BROKER_ADDR)
def broker(broker_addr):
    """Run only the message broker."""
    host, port = _addr(broker_addr)
    b = Broker(host=host, port=port)
    _guard_port("broker", port, b.start)
    click.echo(f"broker on {host}:{port}, ctrl-c to stop")
    try:
        while True:
            time.sleep(1.0)
    except KeyboardInterrupt:
        pass
    finally:
        b.stop()


@main.command()
@click.option("--scenario", envvar="MB_SCENARIO", default=None)
@click.option("--profile", envvar="MB_PROFILE", default="profile.json", help="profiles are served from this file's directory")
@click.option("--cortex-addr", envvar="MB_CORTEX_ADDR", default=DEFAULT_CORTEX_ADDR)
@click.option("--seed", envvar="MB_SEED", type=int, default=42)
@click.option("--pink", envvar="MB_PINK", type=float, default=10.0)
@click.option("--white", envvar="MB_WHITE", type=float, default=1.0)
@click.option("--rate", envvar="MB_RATE", type=float, default=1.0)
@click.option("--allow-injection", is_flag=True, default=False)
def cortex(scenario, profile, cortex_addr, seed, pink, white, rate, allow_injection):
    """Run only the headset service, streaming a scenario."""
    host, port = _addr(cortex_addr)
    script = resolve_scenario(scenario) if scenario else neutral_script(IDLE_STREAM_S)
    noise = NoiseModel(pink_amplitude=pink, white_amplitude=white, seed=seed)
    clock = RealClock() if rate == 1.0 else ScaledClock(rate)
    service = CortexService(
        CortexConfig(
            credentials=(DEFAULT_CREDENTIALS,),
            host=host,
            port=port,
            profile_dir=str(Path(profile).resolve().parent),
            allow_injection=allow_injection,
        ),
        source=SynthSource(script, noise=noise),
        clock=clock,
    )
    server = _guard_port("cortex", port, lambda: CortexServer(service))
    server.start()
    service.start_stream()
    click.echo(f"headset service on ws://{host}:{port}/, ctrl-c to stop")
    try:
        while not service.wait_stream_end(0.5):
            pass
    except KeyboardInterrupt:
        pass
    finally:
        service.stop_stream()
        server.close()


@main.command()
@click.option("--profile", envvar="MB_PROFILE", default="profile.json")
@click.option("--broker-addr", envvar="MB_BROKER_ADDR", default=DEFAULT_BROKER_ADDR)
@click.option("--cortex-addr", envvar="MB_CORTEX_ADDR", default=DEFAULT_CORTEX_ADDR)
@click.option("--bridge-log", envvar="MB_BRIDGE_LOG", default=None)
def bridge(profile, broker_addr, cortex_addr, bridge_log):
    """Run only the detection-to-command bridge."""
    bhost, bport = _addr(broker_addr)
    chost, cport = _addr(cortex_addr)
    stop = threading.Event()
    out = open(bridge_log, "w", encoding="utf-8") if bridge_log else None
    try:
        run_bridge(
            cortex_url=f"ws://{chost}:{cport}/",
            credentials=DEFAULT_CREDENTIALS,
            profile=Path(profile).stem,
            broker_host=bhost,
            broker_port=bport,
            log=out,
            stop=stop,
        )
    except KeyboardInterrupt:
        stop.set()
    except BridgeConfigError as exc:
        raise click.ClickException(str(exc))
    finally:
        if out is not None:
            out.close()


@main.command()
@click.option("--broker-addr", envvar="MB_BROKER_ADDR", default=DEFAULT_BROKER_ADDR)
@click.option("--rate", envvar="MB_RATE", type=float, default=1.0)
def drone(broker_addr, rate):
    """Run only the simulated vehicle."""
    host, port = _addr(broker_addr)
    clock = RealClock() if rate == 1.0 else ScaledClock(rate)
    stop = threading.Event()
    try:
        state = run_drone(broker_host=host, broker_port=port, clock=clock, stop=stop)
        click.echo(f"drone final: mode={state.mode} z={state.z:.2f}")
    except KeyboardInterrupt:
        stop.set()


if __name__ == "__main__":
    main()
