"""Desk-scale EEG-to-drone control loop.

Synthetic five-channel EEG in, drone telemetry out: band-power features,
a trainable nearest-centroid command classifier, a headset API service
(JSON-RPC over WebSocket), a from-scratch MQTT 3.1.1 relay, and a flight
simulator, all runnable on one machine with no hardware.
"""

__version__ = "0.1.0"
