"""Bridge debouncing rules, decision-log invariants, and the wired path."""

import io
import json
import threading
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minddrone.bridge import (
    COMMAND_TOPIC,
    DEFAULT_FACIAL_MAP,
    DEFAULT_MENTAL_MAP,
    DRONE_MESSAGES,
    REPEAT_HOLD_S,
    BridgeConfigError,
    BridgeState,
    MappingConfig,
    mapping_from_json,
    on_event,
    run_bridge,
)
from minddrone.classifier import Detection, Profile, save_profile, train_neutral
from minddrone.clock import ScaledClock
from minddrone.cortex import CortexConfig, CortexServer, CortexService, Credentials
from minddrone.mqtt import Broker, MemoryNetwork, MqttClient
from minddrone.pipeline import process_frames
from minddrone.synth import Episode, NoiseModel, ScenarioScript, SynthSource, generate
from minddrone.vocab import MENTAL_COMMANDS, NEUTRAL

CREDS = Credentials("flightdeck", "client-1", "s3cret")


def com(label, power, t):
    return Detection(kind="com", label=label, power=power, window_start=float(t))


def fac(label, power, t):
    return Detection(kind="fac", label=label, power=power, window_start=float(t))


def feed(events, config=None):
    """Run a detection sequence through one bridge state."""
    config = config if config is not None else MappingConfig()
    state = BridgeState()
    rows = [on_event(state, det, config) for det in events]
    return state, rows


def emitted(rows):
    return [(r["window_start"], r["message"]) for r in rows if r["message"] is not None]


class TestMappingConfig:
    def test_default_maps(self):
        config = MappingConfig()
        assert config.mental_map == {
            "push": "Fw",
            "pull": "Bw",
            "left": "Left",
            "right": "Right",
            "lift": "Up",
            "drop": "Down",
        }
        assert config.facial_map == {"blink": "stop"}
        assert config.power_threshold == 0.5
        assert config.hold_windows == 2

    def test_rotations_unmapped_by_default(self):
        config = MappingConfig()
        assert not any(label.startswith("rotate") for label in config.mental_map)

    def test_neutral_cannot_map(self):
        with pytest.raises(ValueError):
            MappingConfig(mental_map={NEUTRAL: "Fw"})
        with pytest.raises(ValueError):
            MappingConfig(facial_map={NEUTRAL: "stop"})

    def test_unknown_label_rejected(self):
        with pytest.raises(ValueError):
            MappingConfig(mental_map={"flyUp": "Up"})
        with pytest.raises(ValueError):
            MappingConfig(facial_map={"push": "stop"})  # mental label in facial map

    def test_unknown_message_rejected(self):
        with pytest.raises(ValueError):
            MappingConfig(mental_map={"push": "FORWARD"})

    def test_threshold_and_hold_bounds(self):
        with pytest.raises(ValueError):
            MappingConfig(power_threshold=1.5)
        with pytest.raises(ValueError):
            MappingConfig(power_threshold=-0.1)
        with pytest.raises(ValueError):
            MappingConfig(hold_windows=0)
        MappingConfig(power_threshold=0.0, hold_windows=1)  # both boundaries legal

    def test_json_partial_override(self):
        config = mapping_from_json('{"power_threshold": 0.7}')
        assert config.power_threshold == 0.7
        assert config.mental_map == DEFAULT_MENTAL_MAP
        assert config.facial_map == DEFAULT_FACIAL_MAP

    def test_json_full(self):
        text = json.dumps(
            {
                "mental_map": {"push": "Fw"},
                "facial_map": {"clench": "stop"},
                "power_threshold": 0.6,
                "hold_windows": 3,
            }
        )
        config = mapping_from_json(text)
        assert config.mental_map == {"push": "Fw"}
        assert config.facial_map == {"clench": "stop"}
        assert config.hold_windows == 3

    def test_json_bad_shapes(self):
        with pytest.raises(ValueError):
            mapping_from_json("[1, 2]")
        with pytest.raises(ValueError):
            mapping_from_json('{"mental_map": 3}')


class TestMentalHold:
    def test_hold_rule_emits_on_second_window(self):
        _, rows = feed([com("push", 0.9, 0), com("push", 0.9, 1)])
        assert [r["decision"] for r in rows] == ["hold", "emit"]
        assert emitted(rows) == [(1.0, "Fw")]

    def test_alternating_labels_never_emit(self):
        events = [
            com("push" if i % 2 == 0 else "left", 0.9, i) for i in range(10)
        ]
        _, rows = feed(events)
        assert emitted(rows) == []

    def test_power_dip_resets_the_streak(self):
        _, rows = feed(
            [
                com("push", 0.9, 0),
                com("push", 0.3, 1),
                com("push", 0.9, 2),
                com("push", 0.9, 3),
            ]
        )
        assert emitted(rows) == [(3.0, "Fw")]
        assert rows[1]["decision"] == "below_threshold"

    def test_neutral_resets_the_streak(self):
        _, rows = feed(
            [
                com("push", 0.9, 0),
                com(NEUTRAL, 0.0, 1),
                com("push", 0.9, 2),
                com("push", 0.9, 3),
            ]
        )
        assert emitted(rows) == [(3.0, "Fw")]

    def test_one_emission_per_held_streak(self):
        # a command held for 8 windows sends exactly one message
        _, rows = feed([com("push", 0.9, t) for t in range(8)])
        assert emitted(rows) == [(1.0, "Fw")]
        assert [r["decision"] for r in rows[2:]] == ["suppressed"] * 6

    def test_reemission_after_interruption(self):
        events = [com("push", 0.9, t) for t in range(4)]
        events += [com(NEUTRAL, 0.0, 4)]
        events += [com("push", 0.9, 5), com("push", 0.9, 6)]
        _, rows = feed(events)
        assert emitted(rows) == [(1.0, "Fw"), (6.0, "Fw")]

    def test_repeat_hold_blocks_quick_reformation(self):
        # with hold_windows=1 a command re-forming right after an
        # interruption still waits out the repeat hold
        config = MappingConfig(hold_windows=1)
        _, rows = feed(
            [
                com("push", 0.9, 0.0),
                com(NEUTRAL, 0.0, 0.5),
                com("push", 0.9, 1.0),
                com("push", 0.9, 2.0),
            ],
            config,
        )
        assert emitted(rows) == [(0.0, "Fw"), (2.0, "Fw")]
        assert rows[2]["decision"] == "suppressed"

    def test_different_command_not_blocked_by_repeat_hold(self):
        _, rows = feed(
            [
                com("push", 0.9, 0),
                com("push", 0.9, 1),
                com("left", 0.9, 2),
                com("left", 0.9, 3),
            ]
        )
        assert emitted(rows) == [(1.0, "Fw"), (3.0, "Left")]

    def test_unmapped_mental_counted(self):
        state, rows = feed([com("rotateLeft", 0.9, t) for t in range(3)])
        assert emitted(rows) == []
        assert state.unmapped_count == 3
        assert all(r["decision"] == "unmapped" for r in rows)

    def test_power_exactly_at_threshold_counts(self):
        _, rows = feed([com("push", 0.5, 0), com("push", 0.5, 1)])
        assert emitted(rows) == [(1.0, "Fw")]


class TestFacial:
    def test_blink_emits_immediately(self):
        _, rows = feed([fac("blink", 1.0, 0)])
        assert emitted(rows) == [(0.0, "stop")]

    def test_blink_every_window(self):
        # safety triggers have no hold and no repeat suppression
        _, rows = feed([fac("blink", 1.0, t) for t in range(3)])
        assert emitted(rows) == [(0.0, "stop"), (1.0, "stop"), (2.0, "stop")]

    def test_facial_neutral_is_silent(self):
        _, rows = feed([fac(NEUTRAL, 0.0, 0)])
        assert emitted(rows) == []

    def test_unmapped_facial_counted(self):
        state, rows = feed([fac("smile", 0.8, 0)])
        assert emitted(rows) == []
        assert state.unmapped_count == 1

    def test_facial_does_not_disturb_mental_streak(self):
        _, rows = feed(
            [
                com("push", 0.9, 0),
                fac("blink", 1.0, 0.5),
                com("push", 0.9, 1),
            ]
        )
        assert emitted(rows) == [(0.5, "stop"), (1.0, "Fw")]

    def test_stop_precedes_pending_mental_command(self):
        # a stop arriving mid-hold is emitted before the held command
        _, rows = feed(
            [
                com("push", 0.9, 0),
                fac("blink", 1.0, 0.5),
                com("push", 0.9, 1),
                com("push", 0.9, 2),
            ]
        )
        messages = [m for _, m in emitted(rows)]
        assert messages.index("stop") < messages.index("Fw")


mental_events = st.lists(
    st.tuples(
        st.sampled_from((NEUTRAL,) + MENTAL_COMMANDS[:6]),
        st.floats(min_value=0.0, max_value=1.0, allow_nan=False),
    ),
    min_size=0,
    max_size=60,
)


class TestEmissionProperties:
    @settings(max_examples=200, deadline=None)
    @given(events=mental_events, hold=st.integers(1, 3), theta=st.sampled_from([0.0, 0.5]))
    def test_no_emission_without_threshold_and_hold(self, events, hold, theta):
        """Every mental emission is preceded by a qualifying streak.

        Replays the raw event stream through an independent streak
        counter and cross-checks each decision row against it.
        """
        config = MappingConfig(hold_windows=hold, power_threshold=theta)
        state = BridgeState()
        streak_label, streak_len = None, 0
        for i, (label, power) in enumerate(events):
            row = on_event(state, com(label, power, float(i)), config)
            if label != streak_label:
                streak_label, streak_len = label, 0
            if label == NEUTRAL or power < theta:
                streak_len = 0
            else:
                streak_len += 1
            if row["message"] is not None:
                assert streak_len >= hold
                assert power >= theta
                assert row["message"] == config.mental_map[label]

    @settings(max_examples=200, deadline=None)
    @given(events=mental_events, hold=st.integers(1, 3))
    def test_rate_bound_per_label(self, events, hold):
        """At the stream's one-window cadence, each label emits at most
        once per repeat-hold interval."""
        config = MappingConfig(hold_windows=hold)
        state = BridgeState()
        last_emit = {}
        for i, (label, power) in enumerate(events):
            row = on_event(state, com(label, power, float(i)), config)
            if row["message"] is not None:
                t = row["window_start"]
                if label in last_emit:
                    assert t - last_emit[label] >= REPEAT_HOLD_S
                last_emit[label] = t

    @settings(max_examples=100, deadline=None)
    @given(
        events=st.lists(
            st.tuples(
                st.sampled_from(["com", "fac"]),
                st.sampled_from([NEUTRAL, "push", "left", "blink"]),
                st.floats(min_value=0.0, max_value=1.0, allow_nan=False),
            ),
            max_size=40,
        )
    )
    def test_mapped_facial_always_emits(self, events):
        config = MappingConfig()
        state = BridgeState()
        for i, (kind, label, power) in enumerate(events):
            vocab_ok = (kind == "com" and label != "blink") or (
                kind == "fac" and label in (NEUTRAL, "blink")
            )
            if not vocab_ok:
                continue
            det = Detection(kind=kind, label=label, power=power, window_start=float(i))
            row = on_event(state, det, config)
            if kind == "fac" and label == "blink":
                assert row["message"] == "stop"


def trained_profile(labels=("push",), name="pilot", seed=11):
    """Profile built offline from one continuous recording (shared noise
    seed with the streamed scenario: same headset, same sitting)."""
    episodes = tuple(
        Episode(30.0 + 10.0 * i, 8.0, "mental", label) for i, label in enumerate(labels)
    )
    script = ScenarioScript(duration=30.0 + 10.0 * len(labels), episodes=episodes)
    frames, _ = generate(script, noise=NoiseModel(seed=seed))
    wins = process_frames(frames)

    def inside(lo, hi):
        return [w.features for w in wins if w.start_time >= lo and w.end_time <= hi]

    from minddrone.classifier import train_command

    profile = train_neutral(Profile(name=name), inside(20.0, 28.0)[:7])
    for i, label in enumerate(labels):
        start = 30.0 + 10.0 * i
        profile = train_command(profile, label, inside(start, start + 8.0)[:7])
    return profile


class Collector:
    def __init__(self):
        self.messages = []
        self._cond = threading.Condition()

    def __call__(self, msg):
        with self._cond:
            self.messages.append((msg.topic, bytes(msg.payload)))
            self._cond.notify_all()

    def wait_for(self, count, timeout=5.0):
        with self._cond:
            self._cond.wait_for(lambda: len(self.messages) >= count, timeout)
            return len(self.messages) >= count


def start_bridge(**kwargs):
    stop = threading.Event()
    errors = []

    def run():
        try:
            run_bridge(stop=stop, **kwargs)
        except Exception as exc:  # surfaced by the test at join time
            errors.append(exc)

    thread = threading.Thread(target=run, daemon=True)
    thread.start()
    return stop, thread, errors


class TestRunBridge:
    # seed picked so the scripted episode classifies cleanly end to end
    # (no mid-episode boundary rejection splitting the hold streak)
    SEED = 4

    def make_service(self, tmp_path, script, rate, profile=None):
        if profile is not None:
            save_profile(profile, tmp_path / f"{profile.name}.json")
        source = SynthSource(script, noise=NoiseModel(seed=self.SEED)) if script else None
        config = CortexConfig(credentials=(CREDS,), profile_dir=str(tmp_path), port=0)
        return CortexService(config, source=source, clock=ScaledClock(rate=rate))

    def test_push_episode_end_to_end(self, tmp_path):
        script = ScenarioScript(
            duration=22.0, episodes=(Episode(12.0, 8.0, "mental", "push"),)
        )
        profile = trained_profile(seed=self.SEED)

        # oracle: the same record through the offline stack must yield
        # exactly one forward command under the default debouncing
        frames, _ = generate(script, noise=NoiseModel(seed=self.SEED))
        from minddrone.classifier import classify

        state = BridgeState()
        oracle = []
        for w in process_frames(frames):
            det = classify(profile, w.features, window_start=w.start_time)
            row = on_event(state, det, MappingConfig())
            if row["message"] is not None:
                oracle.append((w.start_time, row["message"]))
        assert [m for _, m in oracle] == ["Fw"]
        assert 12.0 <= oracle[0][0] < 20.0  # inside the episode

        service = self.make_service(tmp_path, script, rate=15.0, profile=profile)
        server = CortexServer(service)
        server.start()
        net = MemoryNetwork()
        log = io.StringIO()
        try:
            with Broker(network=net, port=1883):
                got = Collector()
                watcher = MqttClient("watcher", network=net, on_message=got).connect()
                watcher.subscribe(COMMAND_TOPIC, qos=1)
                stop, thread, errors = start_bridge(
                    cortex_url=f"ws://127.0.0.1:{server.port}/",
                    credentials=CREDS,
                    profile="pilot",
                    network=net,
                    log=log,
                )
                try:
                    service.start_stream()
                    assert service.wait_stream_end(timeout=30.0)
                    got.wait_for(1, timeout=5.0)
                    time.sleep(0.3)  # allow any (wrong) extra messages to surface
                finally:
                    stop.set()
                    thread.join(timeout=5.0)
                    watcher.close()
                assert not errors
                assert got.messages == [(COMMAND_TOPIC, b"Fw")]
        finally:
            server.close()
            service.stop_stream()

        rows = [json.loads(line) for line in log.getvalue().splitlines()]
        assert [r["message"] for r in rows if r["message"] is not None] == ["Fw"]
        decisions = {r["decision"] for r in rows}
        assert "emit" in decisions and "neutral" in decisions and "hold" in decisions

    def test_cortex_loss_publishes_stop_within_a_second(self, tmp_path):
        script = ScenarioScript(duration=120.0)  # all neutral, keeps streaming
        profile = trained_profile(seed=self.SEED)
        service = self.make_service(tmp_path, script, rate=8.0, profile=profile)
        server = CortexServer(service)
        server.start()
        net = MemoryNetwork()
        with Broker(network=net, port=1883):
            got = Collector()
            watcher = MqttClient("watcher", network=net, on_message=got).connect()
            watcher.subscribe(COMMAND_TOPIC, qos=1)
            stop, thread, errors = start_bridge(
                cortex_url=f"ws://127.0.0.1:{server.port}/",
                credentials=CREDS,
                profile="pilot",
                network=net,
            )
            try:
                service.start_stream()
                time.sleep(0.8)  # bridge is up and consuming events
                killed_at = time.monotonic()
                server.close()
                service.stop_stream()
                assert got.wait_for(1, timeout=2.0)
                latency = time.monotonic() - killed_at
                assert got.messages == [(COMMAND_TOPIC, b"stop")]
                assert latency <= 1.0
            finally:
                stop.set()
                thread.join(timeout=5.0)
                watcher.close()
            assert not errors

    def test_refuses_missing_profile(self, tmp_path):
        service = self.make_service(tmp_path, script=None, rate=60.0)
        server = CortexServer(service)
        server.start()
        try:
            with pytest.raises(BridgeConfigError):
                run_bridge(
                    cortex_url=f"ws://127.0.0.1:{server.port}/",
                    credentials=CREDS,
                    profile="nobody",
                    network=MemoryNetwork(),
                )
        finally:
            server.close()

    def test_refuses_untrained_profile(self, tmp_path):
        # neutral baseline only: nothing is mapped, nothing could ever emit
        frames, _ = generate(
            ScenarioScript(duration=30.0), noise=NoiseModel(seed=self.SEED)
        )
        wins = [w.features for w in process_frames(frames) if w.start_time >= 20.0]
        profile = train_neutral(Profile(name="learner"), wins[:7])
        service = self.make_service(tmp_path, script=None, rate=60.0, profile=profile)
        server = CortexServer(service)
        server.start()
        try:
            with pytest.raises(BridgeConfigError):
                run_bridge(
                    cortex_url=f"ws://127.0.0.1:{server.port}/",
                    credentials=CREDS,
                    profile="learner",
                    network=MemoryNetwork(),
                )
        finally:
            server.close()

    def test_bad_credentials_refused(self, tmp_path):
        profile = trained_profile(seed=self.SEED)
        service = self.make_service(tmp_path, script=None, rate=60.0, profile=profile)
        server = CortexServer(service)
        server.start()
        try:
            with pytest.raises(BridgeConfigError):
                run_bridge(
                    cortex_url=f"ws://127.0.0.1:{server.port}/",
                    credentials=Credentials("flightdeck", "client-1", "wrong"),
                    profile="pilot",
                    network=MemoryNetwork(),
                )
        finally:
            server.close()
