"""Minimal MQTT 3.1.1: codec, broker, client, and test transports."""

from .broker import Broker
from .client import BACKOFF_BASE, BACKOFF_CAP, CONNECT_TIMEOUT, ConnectError, MqttClient
from .codec import (
    MAX_PAYLOAD,
    MAX_REMAINING_LENGTH,
    Connack,
    Connect,
    Disconnect,
    EncodeError,
    MqttPacket,
    NeedMore,
    Pingreq,
    Pingresp,
    ProtocolError,
    Puback,
    Publish,
    Suback,
    Subscribe,
    decode_packet,
    decode_varint,
    encode_packet,
    encode_varint,
    valid_topic,
)
from .core import MAX_ATTEMPTS, RETRY_INTERVAL, BrokerCore, ClientCore, Close, Message, Send
from .net import MemoryNetwork, TcpNetwork, TransportError

__all__ = [
    "BACKOFF_BASE",
    "BACKOFF_CAP",
    "Broker",
    "BrokerCore",
    "CONNECT_TIMEOUT",
    "ClientCore",
    "Close",
    "Connack",
    "Connect",
    "ConnectError",
    "Disconnect",
    "EncodeError",
    "MAX_ATTEMPTS",
    "MAX_PAYLOAD",
    "MAX_REMAINING_LENGTH",
    "MemoryNetwork",
    "Message",
    "MqttClient",
    "MqttPacket",
    "NeedMore",
    "Pingreq",
    "Pingresp",
    "ProtocolError",
    "Puback",
    "Publish",
    "RETRY_INTERVAL",
    "Send",
    "Suback",
    "Subscribe",
    "TcpNetwork",
    "TransportError",
    "decode_packet",
    "decode_varint",
    "encode_packet",
    "encode_varint",
    "valid_topic",
]
