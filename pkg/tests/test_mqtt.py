"""Messaging layer tests: codec oracles, fuzz totality, broker/client
protocol rules, both transports end to end, and third-party interop."""

import random
import shutil
import socket
import subprocess
import threading
import time
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minddrone.mqtt import (
    BACKOFF_BASE,
    BACKOFF_CAP,
    Broker,
    BrokerCore,
    CONNECT_TIMEOUT,
    ClientCore,
    Close,
    Connack,
    Connect,
    ConnectError,
    Disconnect,
    EncodeError,
    MAX_ATTEMPTS,
    MAX_PAYLOAD,
    MemoryNetwork,
    MqttClient,
    NeedMore,
    Pingreq,
    Pingresp,
    ProtocolError,
    Puback,
    Publish,
    RETRY_INTERVAL,
    Send,
    Suback,
    Subscribe,
    TcpNetwork,
    decode_packet,
    decode_varint,
    encode_packet,
    encode_varint,
    valid_topic,
)

FIXTURES = Path(__file__).parent / "fixtures"


def hx(s: str) -> bytes:
    return bytes.fromhex(s.replace(" ", ""))


class TestCodecOracles:
    """Hand-encoded wire vectors, written from the protocol document
    before the codec existed."""

    def test_publish_drone_cmd(self):
        packet = Publish("drone/cmd", b"Fw", qos=0)
        assert encode_packet(packet) == hx("30 0D 00 09 64 72 6F 6E 65 2F 63 6D 64 46 77")

    def test_pingreq(self):
        assert encode_packet(Pingreq()) == hx("C0 00")

    def test_pingresp_disconnect(self):
        assert encode_packet(Pingresp()) == hx("D0 00")
        assert encode_packet(Disconnect()) == hx("E0 00")

    def test_varint_321(self):
        assert encode_varint(321) == hx("C1 02")

    def test_connect(self):
        packet = Connect("bridge", keep_alive=60)
        assert encode_packet(packet) == hx(
            "10 12 00 04 4D 51 54 54 04 02 00 3C 00 06 62 72 69 64 67 65"
        )

    def test_connack(self):
        assert encode_packet(Connack()) == hx("20 02 00 00")

    def test_qos1_publish_carries_packet_id(self):
        packet = Publish("a/b", b"\x01", qos=1, packet_id=10)
        assert encode_packet(packet) == hx("32 08 00 03 61 2F 62 00 0A 01")

    def test_puback(self):
        assert encode_packet(Puback(2)) == hx("40 02 00 02")

    def test_subscribe(self):
        packet = Subscribe(1, (("drone/cmd", 1),))
        assert encode_packet(packet) == hx(
            "82 0E 00 01 00 09 64 72 6F 6E 65 2F 63 6D 64 01"
        )

    def test_suback(self):
        assert encode_packet(Suback(1, (1,))) == hx("90 03 00 01 01")


class TestVarint:
    def test_boundaries(self):
        table = {
            0: 1,
            127: 1,
            128: 2,
            16383: 2,
            16384: 3,
            2097151: 3,
            2097152: 4,
            268435455: 4,
        }
        for value, nbytes in table.items():
            encoded = encode_varint(value)
            assert len(encoded) == nbytes, value
            assert decode_varint(encoded) == (value, nbytes)

    def test_overlong_is_protocol_error(self):
        with pytest.raises(ProtocolError):
            decode_varint(hx("FF FF FF FF FF"))

    def test_out_of_range_encode(self):
        with pytest.raises(EncodeError):
            encode_varint(268435456)
        with pytest.raises(EncodeError):
            encode_varint(-1)

    @given(st.integers(0, 268435455))
    def test_round_trip(self, value):
        encoded = encode_varint(value)
        assert decode_varint(encoded) == (value, len(encoded))


topics = st.text(
    st.characters(codec="utf-8", exclude_characters="+#\x00"), min_size=1, max_size=20
).filter(valid_topic)

valid_packets = st.one_of(
    st.builds(Connect, st.text(min_size=1, max_size=23), st.integers(0, 65535)),
    st.builds(Connack, st.integers(0, 255), st.booleans()),
    st.builds(
        Publish,
        topics,
        st.binary(max_size=64),
        st.just(0),
        st.none(),
        st.booleans(),
        st.booleans(),
    ),
    st.builds(
        Publish,
        topics,
        st.binary(max_size=64),
        st.just(1),
        st.integers(1, 65535),
        st.booleans(),
        st.booleans(),
    ),
    st.builds(Puback, st.integers(1, 65535)),
    st.builds(
        Subscribe,
        st.integers(1, 65535),
        st.lists(
            st.tuples(topics, st.integers(0, 1)), min_size=1, max_size=4
        ).map(tuple),
    ),
    st.builds(
        Suback,
        st.integers(1, 65535),
        st.lists(st.sampled_from([0, 1, 0x80]), min_size=1, max_size=4).map(tuple),
    ),
    st.just(Pingreq()),
    st.just(Pingresp()),
    st.just(Disconnect()),
)


class TestRoundTrip:
    @settings(max_examples=300, deadline=None)
    @given(valid_packets)
    def test_decode_inverts_encode(self, packet):
        encoded = encode_packet(packet)
        assert decode_packet(encoded) == (packet, len(encoded))

    @settings(max_examples=150, deadline=None)
    @given(valid_packets, st.data())
    def test_prefix_asks_for_more(self, packet, data):
        encoded = encode_packet(packet)
        cut = data.draw(st.integers(0, len(encoded) - 1))
        result = decode_packet(encoded[:cut])
        assert isinstance(result, NeedMore)
        assert cut < result.expected <= len(encoded)

    def test_three_bytes_of_fifteen_byte_packet(self):
        encoded = encode_packet(Publish("drone/cmd", b"Fw", qos=0))
        assert len(encoded) == 15
        result = decode_packet(encoded[:3])
        assert isinstance(result, NeedMore)
        assert result.expected >= 15

    @settings(max_examples=150, deadline=None)
    @given(valid_packets, st.binary(min_size=1, max_size=16))
    def test_trailing_bytes_not_consumed(self, packet, extra):
        encoded = encode_packet(packet)
        assert decode_packet(encoded + extra) == (packet, len(encoded))


class TestDecodeTotality:
    def test_million_random_inputs(self):
        """decode_packet never raises anything but ProtocolError."""
        rng = random.Random(0xBEEF)
        outcomes = {"packet": 0, "need_more": 0, "error": 0}
        for _ in range(700_000):
            n = rng.randint(0, 24)
            data = rng.randbytes(n)
            self._classify(data, outcomes)
        # mutated valid frames hit the deeper body parsers far more often
        # than uniform noise does
        samples = [
            encode_packet(Publish("drone/cmd", b"Fw")),
            encode_packet(Publish("x", b"\x00" * 10, qos=1, packet_id=77)),
            encode_packet(Connect("pilot", 60)),
            encode_packet(Subscribe(3, (("drone/telemetry", 0), ("drone/cmd", 1)))),
            encode_packet(Suback(3, (0, 1))),
            encode_packet(Connack(5, True)),
            encode_packet(Puback(9)),
        ]
        for _ in range(300_000):
            base = bytearray(rng.choice(samples))
            for _ in range(rng.randint(1, 3)):
                base[rng.randrange(len(base))] = rng.randrange(256)
            self._classify(bytes(base), outcomes)
        assert sum(outcomes.values()) == 1_000_000
        # sanity: the fuzz actually exercised all three outcomes
        assert all(outcomes.values()), outcomes

    @staticmethod
    def _classify(data, outcomes):
        try:
            result = decode_packet(data)
        except ProtocolError:
            outcomes["error"] += 1
            return
        if isinstance(result, NeedMore):
            assert result.expected > len(data)
            outcomes["need_more"] += 1
        else:
            packet, consumed = result
            assert 0 < consumed <= len(data)
            outcomes["packet"] += 1

    def test_payload_cap(self):
        with pytest.raises(EncodeError):
            encode_packet(Publish("t", b"x" * (MAX_PAYLOAD + 1)))
        huge = bytes((0x30,)) + encode_varint(MAX_PAYLOAD + 64 * 1024 + 1)
        with pytest.raises(ProtocolError):
            decode_packet(huge)

    def test_wildcard_topics_refused(self):
        for topic in ("", "a/+/b", "a/#", "a\x00b"):
            assert not valid_topic(topic)
            with pytest.raises(EncodeError):
                encode_packet(Publish(topic, b""))


def connect_core(core: BrokerCore, conn_id: int, client_id: str, now=0.0):
    core.connection_opened(conn_id)
    return core.data_received(conn_id, encode_packet(Connect(client_id)), now)


def sent_packets(actions):
    out = []
    for action in actions:
        if isinstance(action, Send):
            packet, _ = decode_packet(action.data)
            out.append((action.conn_id, packet))
    return out


class TestBrokerCore:
    def subscribe(self, core, conn_id, topic, qos=1, now=0.0):
        return core.data_received(
            conn_id, encode_packet(Subscribe(1, ((topic, qos),))), now
        )

    def test_connack_on_connect(self):
        core = BrokerCore()
        actions = connect_core(core, 1, "a")
        assert sent_packets(actions) == [(1, Connack(0, False))]

    def test_two_subscribers_fan_out(self):
        core = BrokerCore()
        for conn_id, name in ((1, "a"), (2, "b"), (3, "pub")):
            connect_core(core, conn_id, name)
        self.subscribe(core, 1, "drone/cmd", qos=0)
        self.subscribe(core, 2, "drone/cmd", qos=0)
        actions = core.data_received(3, encode_packet(Publish("drone/cmd", b"Fw")), 0.0)
        got = sent_packets(actions)
        assert [c for c, _ in got] == [1, 2]
        assert all(p == Publish("drone/cmd", b"Fw") for _, p in got)

    def test_no_subscribers_empty(self):
        core = BrokerCore()
        connect_core(core, 1, "pub")
        actions = core.data_received(1, encode_packet(Publish("drone/cmd", b"Fw")), 0.0)
        assert actions == []

    def test_qos_is_min_of_publish_and_grant(self):
        core = BrokerCore()
        connect_core(core, 1, "sub0")
        connect_core(core, 2, "pub")
        self.subscribe(core, 1, "t", qos=0)
        pub = encode_packet(Publish("t", b"x", qos=1, packet_id=5))
        got = sent_packets(core.data_received(2, pub, 0.0))
        # publisher gets its PUBACK; subscriber gets a qos0 copy, so no
        # pending retry entry exists for it
        assert got[0] == (2, Puback(5))
        assert got[1][1].qos == 0
        assert core.tick(100.0) == []

    def test_self_receive_when_subscribed(self):
        core = BrokerCore()
        connect_core(core, 1, "loner")
        self.subscribe(core, 1, "t", qos=0)
        got = sent_packets(core.data_received(1, encode_packet(Publish("t", b"hi")), 0.0))
        assert got == [(1, Publish("t", b"hi"))]

    def test_new_connection_evicts_old_same_client_id(self):
        core = BrokerCore()
        connect_core(core, 1, "dup")
        core.connection_opened(2)
        actions = core.data_received(2, encode_packet(Connect("dup")), 0.0)
        assert Close(1) in actions
        assert (2, Connack(0, False)) in sent_packets(actions)

    def test_publish_order_preserved_per_subscriber(self):
        core = BrokerCore()
        connect_core(core, 1, "sub")
        connect_core(core, 2, "pub")
        self.subscribe(core, 1, "t", qos=0)
        seen = []
        for i in range(20):
            actions = core.data_received(
                2, encode_packet(Publish("t", str(i).encode())), 0.0
            )
            seen += [p.payload for _, p in sent_packets(actions)]
        assert seen == [str(i).encode() for i in range(20)]

    def test_first_packet_must_be_connect(self):
        core = BrokerCore()
        core.connection_opened(1)
        actions = core.data_received(1, encode_packet(Pingreq()), 0.0)
        assert actions == [Close(1)]

    def test_pingreq_gets_pingresp(self):
        core = BrokerCore()
        connect_core(core, 1, "a")
        got = sent_packets(core.data_received(1, encode_packet(Pingreq()), 0.0))
        assert got == [(1, Pingresp())]

    def test_garbage_closes_connection(self):
        core = BrokerCore()
        connect_core(core, 1, "a")
        assert core.data_received(1, hx("FF FF FF FF FF"), 0.0) == [Close(1)]

    def test_split_delivery_reassembles(self):
        core = BrokerCore()
        connect_core(core, 1, "sub")
        connect_core(core, 2, "pub")
        self.subscribe(core, 1, "t", qos=0)
        data = encode_packet(Publish("t", b"abc"))
        assert core.data_received(2, data[:4], 0.0) == []
        got = sent_packets(core.data_received(2, data[4:], 0.0))
        assert got == [(1, Publish("t", b"abc"))]


class TestBrokerQos1Retry:
    def deliver_qos1(self, core):
        connect_core(core, 1, "sub")
        connect_core(core, 2, "pub")
        core.data_received(1, encode_packet(Subscribe(1, (("t", 1),))), 0.0)
        actions = core.data_received(
            2, encode_packet(Publish("t", b"x", qos=1, packet_id=9)), 0.0
        )
        outbound = [p for c, p in sent_packets(actions) if c == 1]
        assert len(outbound) == 1 and outbound[0].qos == 1
        return outbound[0].packet_id

    def test_unacked_retransmits_with_dup(self):
        core = BrokerCore()
        pid = self.deliver_qos1(core)
        assert core.tick(1.9) == []
        resent = sent_packets(core.tick(2.1))
        assert len(resent) == 1
        conn_id, packet = resent[0]
        assert (conn_id, packet.dup, packet.packet_id) == (1, True, pid)

    def test_puback_stops_retries(self):
        core = BrokerCore()
        pid = self.deliver_qos1(core)
        core.data_received(1, encode_packet(Puback(pid)), 0.5)
        assert core.tick(10.0) == []

    def test_five_attempts_then_close(self):
        core = BrokerCore()
        self.deliver_qos1(core)
        now, resends = 0.0, 0
        for _ in range(MAX_ATTEMPTS - 1):
            now += RETRY_INTERVAL + 0.1
            actions = core.tick(now)
            resends += len([a for a in actions if isinstance(a, Send)])
        assert resends == MAX_ATTEMPTS - 1
        now += RETRY_INTERVAL + 0.1
        assert core.tick(now) == [Close(1)]

    def test_retry_policy_constants(self):
        assert RETRY_INTERVAL == 2.0
        assert MAX_ATTEMPTS == 5


class TestClientCore:
    def connected_core(self, keep_alive=60):
        core = ClientCore("c", keep_alive=keep_alive)
        core.begin(0.0)
        core.data_received(encode_packet(Connack()), 0.0)
        assert core.connected
        return core

    def test_begin_is_connect(self):
        core = ClientCore("c")
        packet, _ = decode_packet(core.begin(0.0))
        assert packet == Connect("c", 60, True)

    def test_nonzero_connack_kills(self):
        core = ClientCore("c")
        core.begin(0.0)
        core.data_received(encode_packet(Connack(4)), 0.0)
        assert not core.connected and core.dead is not None

    def test_keepalive_ping_at_half_interval(self):
        core = self.connected_core(keep_alive=60)
        assert core.tick(29.0) == b""
        packet, _ = decode_packet(core.tick(30.0))
        assert packet == Pingreq()

    def test_inbound_qos1_acked_and_delivered(self):
        core = self.connected_core()
        incoming = encode_packet(Publish("t", b"data", qos=1, packet_id=4))
        messages, out = core.data_received(incoming, 1.0)
        assert [(m.topic, m.payload, m.qos) for m in messages] == [("t", b"data", 1)]
        packet, _ = decode_packet(out)
        assert packet == Puback(4)

    def test_qos1_publish_retries_then_dies(self):
        core = self.connected_core()
        core.publish("t", b"x", 1, 0.0)
        now, resends = 0.0, 0
        for _ in range(MAX_ATTEMPTS - 1):
            now += RETRY_INTERVAL + 0.1
            out = core.tick(now)
            if out:
                packet, _ = decode_packet(out)
                assert packet.dup
                resends += 1
        assert resends == MAX_ATTEMPTS - 1
        core.tick(now + RETRY_INTERVAL + 0.1)
        assert core.dead is not None

    def test_puback_clears_pending(self):
        core = self.connected_core()
        out = core.publish("t", b"x", 1, 0.0)
        packet, _ = decode_packet(out)
        core.data_received(encode_packet(Puback(packet.packet_id)), 0.1)
        assert core.tick(10.0) == b"" or decode_packet(core.tick(10.0))[0] == Pingreq()
        assert not core.pending


class Collector:
    def __init__(self):
        self.messages = []
        self.event = threading.Event()

    def __call__(self, msg):
        self.messages.append((msg.topic, bytes(msg.payload)))
        self.event.set()

    def wait_for(self, n, timeout=5.0):
        deadline = time.monotonic() + timeout
        while len(self.messages) < n and time.monotonic() < deadline:
            self.event.wait(0.05)
            self.event.clear()
        return len(self.messages) >= n


def fast_client(net, port, client_id, on_message=None, **kw):
    kw.setdefault("connect_timeout", 2.0)
    kw.setdefault("backoff_base", 0.05)
    kw.setdefault("keep_alive", 5)
    return MqttClient(
        client_id, network=net, port=port, on_message=on_message, **kw
    )


class TestEndToEndMemory:
    def test_subscribe_publish_receive(self):
        net = MemoryNetwork()
        with Broker(network=net, port=1883) as broker:
            got = Collector()
            with fast_client(net, broker.port, "sub", got) as sub:
                sub.subscribe("drone/cmd", qos=0)
                with fast_client(net, broker.port, "pub") as pub:
                    pub.publish("drone/cmd", "Fw")
                    assert got.wait_for(1)
        assert got.messages == [("drone/cmd", b"Fw")]

    def test_connect_error_when_no_broker(self):
        net = MemoryNetwork()
        with pytest.raises(ConnectError):
            fast_client(net, 1883, "c").connect()

    def test_default_timing_constants(self):
        assert CONNECT_TIMEOUT == 5.0
        assert BACKOFF_BASE == 1.0
        assert BACKOFF_CAP == 30.0
        assert ClientCore("x").keep_alive == 60

    def test_broker_restart_resubscribes_and_delivers(self):
        net = MemoryNetwork()
        broker = Broker(network=net, port=1883).start()
        got = Collector()
        sub = fast_client(net, 1883, "sub", got).connect()
        pub = fast_client(net, 1883, "pub").connect()
        try:
            sub.subscribe("drone/cmd", qos=1)
            broker.stop()
            time.sleep(0.15)
            broker = Broker(network=net, port=1883).start()
            deadline = time.monotonic() + 5.0
            while not (sub.connected and pub.connected):
                assert time.monotonic() < deadline, "clients did not reconnect"
                time.sleep(0.02)
            # resubscription happens inside reconnect, before anything else
            time.sleep(0.2)
            pub.publish("drone/cmd", "Lg", qos=1)
            assert got.wait_for(1)
            assert got.messages[-1] == ("drone/cmd", b"Lg")
        finally:
            sub.close()
            pub.close()
            broker.stop()

    def test_queued_qos1_published_after_reconnect(self):
        net = MemoryNetwork()
        broker = Broker(network=net, port=1883).start()
        got = Collector()
        sub = fast_client(net, 1883, "sub", got).connect()
        # the slower publisher guarantees the subscriber is back first;
        # with clean sessions nothing buffers for an absent subscriber
        pub = fast_client(net, 1883, "pub", backoff_base=0.5).connect()
        try:
            sub.subscribe("t", qos=1)
            broker.stop()
            time.sleep(0.1)
            pub.publish("t", "queued", qos=1)  # broker is down right now
            broker = Broker(network=net, port=1883).start()
            assert got.wait_for(1, timeout=5.0)
            assert ("t", b"queued") in got.messages
        finally:
            sub.close()
            pub.close()
            broker.stop()


class TestLossyTransport:
    def test_qos1_at_least_once_under_30_percent_loss(self):
        # The publisher sits behind a link that drops 30% of frames in
        # both directions; the subscriber watches through a clean one.
        # A qos1 publish must reach the broker no matter how many send
        # attempts, reconnects, and duplicate deliveries that takes.
        # The delivery leg cannot promise the same on a lossy link: the
        # broker stops redelivering after its attempt budget and a clean
        # session keeps nothing across the close, by design.
        net = MemoryNetwork(seed=7)
        with Broker(network=net, port=1883, retry_interval=0.08) as broker:
            got = Collector()
            sub = fast_client(net, 1883, "sub", got, retry_interval=0.08).connect()
            try:
                sub.subscribe("t", qos=1)
                net.loss = 0.3
                pub = fast_client(
                    net, 1883, "pub", retry_interval=0.08, connect_timeout=0.4
                )
                for _ in range(50):
                    try:
                        pub.connect()
                        break
                    except ConnectError:
                        continue
                else:
                    pytest.fail("publisher never got through the lossy link")
                payloads = [f"m{i}" for i in range(40)]
                for p in payloads:
                    pub.publish("t", p, qos=1)
                deadline = time.monotonic() + 30.0
                want = set(p.encode() for p in payloads)
                while time.monotonic() < deadline:
                    have = {payload for _, payload in got.messages}
                    if want <= have:
                        break
                    time.sleep(0.05)
                missing = want - {payload for _, payload in got.messages}
                assert not missing, f"lost forever: {sorted(missing)}"
            finally:
                net.loss = 0.0
                sub.close()
                pub.close()

    def test_reordering_does_not_wedge_the_stream(self):
        net = MemoryNetwork(seed=3, reorder=0.2)
        with Broker(network=net, port=1883, retry_interval=0.08) as broker:
            got = Collector()
            sub = fast_client(net, 1883, "sub", got, retry_interval=0.08).connect()
            pub = fast_client(net, 1883, "pub", retry_interval=0.08).connect()
            try:
                sub.subscribe("t", qos=1)
                for i in range(20):
                    pub.publish("t", f"r{i}", qos=1)
                deadline = time.monotonic() + 10.0
                want = {f"r{i}".encode() for i in range(20)}
                while time.monotonic() < deadline:
                    if want <= {p for _, p in got.messages}:
                        break
                    time.sleep(0.05)
                assert want <= {p for _, p in got.messages}
            finally:
                sub.close()
                pub.close()


class TestEndToEndTcp:
    def test_subscribe_publish_receive_over_tcp(self):
        net = TcpNetwork()
        with Broker(network=net, port=0) as broker:
            got = Collector()
            with fast_client(net, broker.port, "sub", got) as sub:
                sub.subscribe("drone/telemetry", qos=0)
                with fast_client(net, broker.port, "pub") as pub:
                    pub.publish("drone/telemetry", b'{"z": 1.0}')
                    assert got.wait_for(1)
        assert got.messages == [("drone/telemetry", b'{"z": 1.0}')]

    def test_connect_error_against_closed_port(self):
        with socket.socket() as probe:
            probe.bind(("127.0.0.1", 0))
            free_port = probe.getsockname()[1]
        with pytest.raises(ConnectError):
            MqttClient("c", port=free_port, connect_timeout=2.0).connect()


class TestAedesInterop:
    """The client against a stock third-party broker.  A broken fixture
    is a failure, not a skip: interop is part of the contract."""

    @pytest.fixture()
    def aedes_port(self):
        node = shutil.which("node")
        assert node, "node is required for the interop test"
        if not (FIXTURES / "node_modules" / "aedes").exists():
            install = subprocess.run(
                ["npm", "install", "--no-audit", "--no-fund"],
                cwd=FIXTURES,
                capture_output=True,
                timeout=300,
            )
            assert install.returncode == 0, install.stderr.decode()[-500:]
        with socket.socket() as probe:
            probe.bind(("127.0.0.1", 0))
            port = probe.getsockname()[1]
        proc = subprocess.Popen(
            [node, str(FIXTURES / "aedes_broker.js"), str(port)],
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            cwd=FIXTURES,
        )
        try:
            line = proc.stdout.readline().decode().strip()
            assert line == "listening", proc.stderr.read().decode()[-500:]
            yield port
        finally:
            proc.terminate()
            proc.wait(timeout=5)

    def test_connect_subscribe_publish_receive(self, aedes_port):
        got = Collector()
        with MqttClient("interop-sub", port=aedes_port, on_message=got) as sub:
            sub.subscribe("drone/cmd", qos=1)
            with MqttClient("interop-pub", port=aedes_port) as pub:
                pub.publish("drone/cmd", "Fw", qos=1)
                assert got.wait_for(1, timeout=10.0)
        assert got.messages[0] == ("drone/cmd", b"Fw")

    def test_qos0_roundtrip(self, aedes_port):
        got = Collector()
        with MqttClient("interop-sub0", port=aedes_port, on_message=got) as sub:
            sub.subscribe("drone/telemetry", qos=0)
            with MqttClient("interop-pub0", port=aedes_port) as pub:
                pub.publish("drone/telemetry", b'{"battery": 0.99}', qos=0)
                assert got.wait_for(1, timeout=10.0)
        assert got.messages[0][1] == b'{"battery": 0.99}'
