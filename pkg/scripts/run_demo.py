#!/usr/bin/env python3
"""Fly the whole rig once, accelerated: train a profile, script a short
mission, launch broker + headset service + bridge + drone in-process,
and narrate what the vehicle did.

    python3 scripts/run_demo.py
    python3 scripts/run_demo.py --rate 10 --workdir /tmp/demo
"""

from argparse import ArgumentParser
from pathlib import Path
import json
import sys
import tempfile
import threading
import time

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from minddrone.classifier import save_profile
from minddrone.cli import RunConfig, orchestrate
from minddrone.drone import TELEMETRY_TOPIC
from minddrone.evaluate import train_from_script
from minddrone.mqtt import MqttClient
from minddrone.scenarios import training_script
from minddrone.synth import Episode, NoiseModel, ScenarioScript, save_scenario

# forward push, a left turn, another push, then silence lands it
MISSION = (
    Episode(10.5, 4.0, "mental", "push"),
    Episode(17.5, 4.0, "mental", "left"),
    Episode(24.5, 4.0, "mental", "push"),
)


def main() -> int:
    parser = ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--rate", type=float, default=20.0,
                        help="clock multiplier for the live run")
    parser.add_argument("--workdir", type=Path, default=None)
    parser.add_argument("--broker-port", type=int, default=1883)
    parser.add_argument("--cortex-port", type=int, default=6868)
    args = parser.parse_args()

    workdir = args.workdir or Path(tempfile.mkdtemp(prefix="minddrone-demo-"))
    workdir.mkdir(parents=True, exist_ok=True)
    noise = NoiseModel(seed=args.seed)

    print("recording the training sitting ...")
    profile = train_from_script(training_script(), noise=noise, name="demo")
    save_profile(profile, workdir / "demo.json")
    print(f"  profile: {sorted(profile.trained_labels)} -> {workdir / 'demo.json'}")

    scenario_path = workdir / "mission.json"
    save_scenario(
        ScenarioScript(duration=40.0, episodes=MISSION), scenario_path
    )

    config = RunConfig(
        scenario=str(scenario_path),
        profile=str(workdir / "demo.json"),
        seed=args.seed,
        rate=args.rate,
        broker_addr=f"127.0.0.1:{args.broker_port}",
        cortex_addr=f"127.0.0.1:{args.cortex_port}",
        bridge_log=str(workdir / "bridge.jsonl"),
    )

    modes = []
    watcher_box = {}

    def attach_watcher() -> None:
        # the broker comes up inside orchestrate; retry until it listens
        deadline = time.monotonic() + 15.0
        while time.monotonic() < deadline:
            try:
                client = MqttClient(
                    "demo-watch",
                    host="127.0.0.1",
                    port=args.broker_port,
                    on_message=lambda m: modes.append(json.loads(m.payload)["mode"]),
                )
                client.connect()
                client.subscribe(TELEMETRY_TOPIC, qos=0)
                watcher_box["client"] = client
                return
            except Exception:
                time.sleep(0.1)

    watcher = threading.Thread(target=attach_watcher, daemon=True)
    watcher.start()

    print(f"flying the mission at {args.rate:g}x ...")
    state = orchestrate(config)
    if "client" in watcher_box:
        watcher_box["client"].close()

    flown = [m for i, m in enumerate(modes) if i == 0 or modes[i - 1] != m]
    print(f"  modes: {' -> '.join(flown) if flown else '(no telemetry seen)'}")
    if state is not None:
        print(f"  final: mode={state.mode} x={state.x:.2f} y={state.y:.2f}"
              f" z={state.z:.2f} yaw={state.yaw:.0f} battery={state.battery:.3f}")
    decisions = (workdir / "bridge.jsonl").read_text().splitlines()
    sent = [json.loads(d)["message"] for d in decisions if json.loads(d).get("message")]
    print(f"  commands sent: {sent}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
