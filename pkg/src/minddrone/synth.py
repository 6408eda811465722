"""Deterministic synthetic five-channel EEG source with ground truth.

Signal model, per channel:

    out(t) = sum_b sqrt(resting_gain[b] * episode_gain[b](t)) * band_b(t)

where band_b is an independent pink + white noise component synthesized
directly in the frequency domain with support restricted to an interior
slice of the band's own range.  Components are therefore incoherent AND
spectrally disjoint: measured band power during a mental episode is the
signature gain times the neutral power of the same band, with no
cross-band leakage for the gain to smear into neighboring features.  Facial expressions are added
afterwards as transient or burst artifacts on their affected channels.

Everything is a pure function of (script, signatures, noise model,
injection sequence): per-component and per-artifact RNGs are derived
from spawn keys, so the stream is bit-identical regardless of read
block size.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .dsp import (
    Band,
    Channel,
    DEFAULT_BANDS,
    EegFrame,
    HOP_SECONDS,
    N_BANDS,
    N_CHANNELS,
    SUPPORTED_RATES,
    WINDOW_SECONDS,
)
from .vocab import FACIAL_EXPRESSIONS, MENTAL_COMMANDS, NEUTRAL


class ScenarioError(ValueError):
    """Invalid scenario script or missing signature."""


class ReplayError(ValueError):
    """Malformed replay file."""


@dataclass(frozen=True)
class CommandSignature:
    """How a mental command shows up: per-(channel, band) power gain."""

    label: str
    modulation: Mapping[tuple[Channel, Band], float]

    def __post_init__(self) -> None:
        if self.label not in MENTAL_COMMANDS:
            raise ScenarioError(f"unknown mental command {self.label!r}")
        if not any(g != 1.0 for g in self.modulation.values()):
            raise ScenarioError(f"signature {self.label!r} modulates nothing")
        if any(g < 0 for g in self.modulation.values()):
            raise ScenarioError("gains must be >= 0")


@dataclass(frozen=True)
class ArtifactSignature:
    """How a facial expression shows up in the raw trace."""

    label: str
    affected_channels: tuple[Channel, ...]
    waveform: str  # "low_freq_transient" or "broadband_burst"
    amplitude: float  # uV: transient peak, or burst RMS
    duration: float  # seconds per instance
    polarity: int = 1  # transient sign; bursts ignore it

    def __post_init__(self) -> None:
        if self.label not in FACIAL_EXPRESSIONS:
            raise ScenarioError(f"unknown facial expression {self.label!r}")
        if self.waveform not in ("low_freq_transient", "broadband_burst"):
            raise ScenarioError(f"unknown waveform {self.waveform!r}")
        if self.amplitude <= 0 or self.duration <= 0:
            raise ScenarioError("amplitude and duration must be positive")
        if not self.affected_channels:
            raise ScenarioError("artifact needs at least one channel")
        if self.polarity not in (-1, 1):
            raise ScenarioError("polarity must be -1 or +1")


@dataclass(frozen=True)
class Episode:
    start: float
    length: float
    kind: str  # "mental" or "facial"
    label: str

    def __post_init__(self) -> None:
        if self.kind not in ("mental", "facial"):
            raise ScenarioError(f"unknown episode kind {self.kind!r}")
        if self.length <= 0 or self.start < 0:
            raise ScenarioError("episode must have start >= 0 and length > 0")

    @property
    def end(self) -> float:
        return self.start + self.length


@dataclass(frozen=True)
class ScenarioScript:
    duration: float
    episodes: tuple[Episode, ...] = ()
    sample_rate: int = 128

    def __post_init__(self) -> None:
        if self.duration <= 0:
            raise ScenarioError("duration must be positive")
        if self.sample_rate not in SUPPORTED_RATES:
            raise ScenarioError(f"sample_rate must be one of {SUPPORTED_RATES}")
        for ep in self.episodes:
            if ep.end > self.duration + 1e-9:
                raise ScenarioError(f"episode {ep.label!r} runs past scenario end")
        for kind in ("mental", "facial"):
            eps = sorted(
                (e for e in self.episodes if e.kind == kind), key=lambda e: e.start
            )
            for a, b in zip(eps, eps[1:]):
                if b.start < a.end - 1e-9:
                    raise ScenarioError(
                        f"{kind} episodes {a.label!r} and {b.label!r} overlap"
                    )


@dataclass(frozen=True)
class NoiseModel:
    pink_amplitude: float = 10.0  # uV RMS per channel
    white_amplitude: float = 1.0  # uV RMS
    seed: int = 0

    def __post_init__(self) -> None:
        if self.pink_amplitude < 0 or self.white_amplitude < 0:
            raise ScenarioError("noise amplitudes must be >= 0")


@dataclass(frozen=True)
class WindowTruth:
    """Ground-truth labels for one segmentation window."""

    win: int
    com: str = NEUTRAL
    fac: str = NEUTRAL


#: Per-band resting-state gains applied to the noise decomposition.  Raw
#: 1/f noise puts more power in Beta than Alpha (Beta is the wider band);
#: these gains restore the canonical monotone resting spectrum.
RESTING_GAINS: dict[Band, float] = {
    Band.Delta: 1.0,
    Band.Theta: 0.8,
    Band.Alpha: 0.7,
    Band.Beta: 0.2,
    Band.Gamma: 0.08,
}

#: Default mental-command signatures: chosen to be linearly separable in
#: feature space, overridable by config.
DEFAULT_COMMAND_SIGNATURES: dict[str, CommandSignature] = {
    "push": CommandSignature(
        "push",
        {(Channel.AF3, Band.Beta): 4.0, (Channel.AF4, Band.Beta): 4.0},
    ),
    "pull": CommandSignature(
        "pull",
        {(Channel.AF3, Band.Theta): 4.0, (Channel.AF4, Band.Theta): 4.0},
    ),
    "lift": CommandSignature("lift", {(Channel.Pz, Band.Alpha): 0.25}),
    "drop": CommandSignature("drop", {(Channel.Pz, Band.Alpha): 4.0}),
    "left": CommandSignature("left", {(Channel.T7, Band.Beta): 4.0}),
    "right": CommandSignature("right", {(Channel.T8, Band.Beta): 4.0}),
}

DEFAULT_ARTIFACT_SIGNATURES: dict[str, ArtifactSignature] = {
    "blink": ArtifactSignature(
        "blink", (Channel.AF3, Channel.AF4), "low_freq_transient", 150.0, 0.4
    ),
    "winkL": ArtifactSignature(
        "winkL", (Channel.AF3,), "low_freq_transient", 150.0, 0.4
    ),
    "winkR": ArtifactSignature(
        "winkR", (Channel.AF4,), "low_freq_transient", 150.0, 0.4
    ),
    "frown": ArtifactSignature(
        "frown", (Channel.AF3, Channel.AF4), "low_freq_transient", 80.0, 0.6,
        polarity=-1,
    ),
    "surprise": ArtifactSignature(
        "surprise", (Channel.AF3, Channel.AF4), "low_freq_transient", 80.0, 0.6
    ),
    "clench": ArtifactSignature(
        "clench", (Channel.T7, Channel.T8), "broadband_burst", 60.0, 1.0
    ),
    "smile": ArtifactSignature(
        "smile", (Channel.T7, Channel.T8), "broadband_burst", 40.0, 0.8
    ),
}

#: Artifact instances repeat at the segmentation hop so every window an
#: episode covers contains at least one full instance.
ARTIFACT_PERIOD = 1.0

#: The noise bed loops with this period.  Windows advance on a 1 s hop,
#: so any seven consecutive windows sample each bed phase exactly once:
#: the spread a profile measures during a minimum-length recording is
#: the same spread later windows of the record are drawn from, which is
#: what keeps the rejection radius calibrated instead of starved by the
#: seven-window training floor.
NOISE_PERIOD_S = 7.0

#: Alternating-projection passes that flatten the bed's short-time
#: envelope (see _spectral_noise); converged well before this count.
_EQUALIZE_PASSES = 24

#: Episode gains ramp in and out over this long, ramps lying entirely
#: OUTSIDE the scripted interval: inside [start, end) the gain is exact,
#: and no labeled window ever contains a power step edge for the
#: feature pipeline's front-end filter to ring on.
GAIN_RAMP_S = 0.5

#: Where each band component's spectral lines live.  The band's power
#: budget still comes from its full canonical range (_band_share); only
#: the line placement is pulled in from edges shared with a much weaker
#: neighbor.  A 2 s Hann-windowed power estimate reads a couple of Hz
#: past a band edge, so a scripted gain on lines parked right at the
#: edge would modulate the neighbor's measured power too, by an amount
#: that depends on where the window landed relative to the bed.  With
#: the guards, a gain moves only its own band's features, at every
#: window alignment.  Delta and Gamma are not gain targets of any
#: default signature and keep their full range.
_BED_SUPPORT = {
    Band.Delta: (0.5, 2.5),
    Band.Theta: (5.5, 6.5),
    Band.Alpha: (9.5, 11.0),
    Band.Beta: (15.0, 26.0),
    Band.Gamma: (30.0, 43.0),
}

# RNG stream ids (first element of every spawn key).
_PINK, _WHITE, _BURST = 0, 1, 2


def _spectral_noise(
    seed: int,
    stream: int,
    channel: int,
    band: int,
    n: int,
    slope: float,
    lo_hz: float,
    hi_hz: float,
) -> np.ndarray:
    """One unit-RMS noise period, synthesized in the frequency domain.

    Spectral magnitudes are deterministic (|X| proportional to f**slope
    inside [lo_hz, hi_hz), zero outside); only the phases are drawn,
    keyed by (stream, channel, band).  Band power over the period is
    therefore an exact property of the bed, and a component carries no
    energy outside its own band.

    The phase draw is then refined by alternating projections: flatten
    the short-time variance profile in the time domain, restore the
    exact magnitudes in the frequency domain.  A low-crest realization
    keeps short-window power estimates of the bed stable, the same
    reason multitone test signals are crest-optimized.
    """
    rng = np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(stream, channel, band))
    )
    half = n // 2 + 1
    freqs = np.arange(half) / NOISE_PERIOD_S
    mags = np.zeros(half)
    keep = (freqs >= lo_hz) & (freqs < hi_hz) & (freqs > 0)
    mags[keep] = freqs[keep] ** slope
    spec = mags * np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, half))
    x = np.fft.irfft(spec, n)

    slot = n // (2 * int(NOISE_PERIOD_S))  # half-second slots
    nslots = n // slot
    centers = (np.arange(nslots) + 0.5) * slot
    wrapped = np.concatenate([centers - n, centers, centers + n])
    idx = np.arange(n)
    for _ in range(_EQUALIZE_PASSES):
        v = x.reshape(nslots, slot).var(axis=1)
        if not v.any():
            break
        g = np.sqrt(v.mean() / np.maximum(v, 1e-30))
        x = x * np.interp(idx, wrapped, np.tile(g, 3))  # periodic interp
        spec = mags * np.exp(1j * np.angle(np.fft.rfft(x)))
        x = np.fft.irfft(spec, n)
    rms = float(np.sqrt(np.mean(x * x)))
    return x / rms if rms > 0 else x


def _band_share(n: int, slope: float, lo_hz: float, hi_hz: float) -> float:
    """RMS share of a full-range f**slope spectrum that lies in one band.

    Weighting each band component by its share reproduces the power
    split a single broadband source would have across the bands, so the
    noise amplitudes keep their meaning as whole-channel RMS figures.
    """
    full_lo = min(lo for lo, _ in DEFAULT_BANDS.values())
    full_hi = max(hi for _, hi in DEFAULT_BANDS.values())
    freqs = np.arange(n // 2 + 1) / NOISE_PERIOD_S
    power = np.where(freqs > 0, freqs, 1.0) ** (2.0 * slope)
    full = (freqs >= full_lo) & (freqs < full_hi)
    inband = full & (freqs >= lo_hz) & (freqs < hi_hz)
    return math.sqrt(float(power[inband].sum()) / float(power[full].sum()))


@dataclass
class _BurstInstance:
    start_sample: int
    samples_by_channel: dict[int, np.ndarray]


class SynthSource:
    """Streaming synthesizer: read(count) yields the next (5, count) block.

    Supports live episode injection for interactive sessions; injected
    episodes may only start at or after the current stream position.
    """

    def __init__(
        self,
        script: ScenarioScript,
        command_signatures: Mapping[str, CommandSignature] | None = None,
        artifact_signatures: Mapping[str, ArtifactSignature] | None = None,
        noise: NoiseModel | None = None,
    ) -> None:
        self.script = script
        self.noise = noise if noise is not None else NoiseModel()
        self.command_signatures = dict(
            DEFAULT_COMMAND_SIGNATURES if command_signatures is None else command_signatures
        )
        self.artifact_signatures = dict(
            DEFAULT_ARTIFACT_SIGNATURES if artifact_signatures is None else artifact_signatures
        )
        self._check_labels(script.episodes)

        fs = script.sample_rate
        self._fs = fs
        self._total = int(round(script.duration * fs))
        self._pos = 0
        self._episodes: list[Episode] = list(script.episodes)
        self._episode_count = len(self._episodes)

        # one bed period per band component, tiled by absolute sample
        # index on read; components are band-limited at synthesis, so no
        # filtering happens here and the output needs no settling time
        self._period_n = int(round(NOISE_PERIOD_S * fs))
        seed = self.noise.seed
        self._bed = [
            [
                _spectral_noise(
                    seed, _PINK, c, b, self._period_n, -0.5, *_BED_SUPPORT[Band(b)]
                )
                * (self.noise.pink_amplitude * _band_share(self._period_n, -0.5, *DEFAULT_BANDS[Band(b)]))
                + _spectral_noise(
                    seed, _WHITE, c, b, self._period_n, 0.0, *_BED_SUPPORT[Band(b)]
                )
                * (self.noise.white_amplitude * _band_share(self._period_n, 0.0, *DEFAULT_BANDS[Band(b)]))
                for b in range(N_BANDS)
            ]
            for c in range(N_CHANNELS)
        ]
        self._bursts: list[_BurstInstance] = []
        for i, ep in enumerate(self._episodes):
            if ep.kind == "facial":
                self._prepare_artifact(ep, i)

    def _check_labels(self, episodes: Iterable[Episode]) -> None:
        for ep in episodes:
            table = (
                self.command_signatures if ep.kind == "mental" else self.artifact_signatures
            )
            if ep.label not in table:
                raise ScenarioError(f"no signature for {ep.kind} episode {ep.label!r}")

    @property
    def sample_rate(self) -> int:
        return self._fs

    @property
    def position_s(self) -> float:
        return self._pos / self._fs

    @property
    def exhausted(self) -> bool:
        return self._pos >= self._total

    def inject(self, kind: str, label: str, length_s: float) -> float:
        """Schedule an episode at the next frame; returns its start time.

        An injection that would overlap an active same-kind episode is
        pushed back to start when that episode ends.
        """
        start = self.position_s
        for ep in self._episodes:
            if ep.kind == kind and ep.start < start + length_s and start < ep.end:
                start = max(start, ep.end)
        end = start + length_s
        if end > self.script.duration:
            raise ScenarioError("injection runs past scenario end")
        ep = Episode(start=start, length=length_s, kind=kind, label=label)
        self._check_labels([ep])
        self._episodes.append(ep)
        index = self._episode_count
        self._episode_count += 1
        if kind == "facial":
            self._prepare_artifact(ep, index)
        return start

    def _prepare_artifact(self, ep: Episode, episode_index: int) -> None:
        sig = self.artifact_signatures[ep.label]
        fs = self._fs
        n_inst = max(1, math.ceil((ep.length - 1e-9) / ARTIFACT_PERIOD))
        for m in range(n_inst):
            t0 = ep.start + m * ARTIFACT_PERIOD
            if t0 >= ep.end:
                break
            dur = min(sig.duration, ep.end - t0)
            n = int(round(dur * fs))
            if n == 0:
                continue
            by_channel: dict[int, np.ndarray] = {}
            if sig.waveform == "low_freq_transient":
                tau = np.arange(n) / fs
                wave = sig.polarity * sig.amplitude * np.sin(
                    np.pi * tau / sig.duration
                )
                for c in sig.affected_channels:
                    by_channel[int(c)] = wave
            else:
                for c in sig.affected_channels:
                    rng = np.random.default_rng(
                        np.random.SeedSequence(
                            self.noise.seed,
                            spawn_key=(_BURST, episode_index, m, int(c)),
                        )
                    )
                    raw = rng.standard_normal(n)
                    rms = float(np.sqrt(np.mean(raw * raw)))
                    # normalize so each instance carries the stated RMS exactly
                    by_channel[int(c)] = sig.amplitude * raw / (rms if rms > 0 else 1.0)
            self._bursts.append(_BurstInstance(int(round(t0 * fs)), by_channel))

    def read(self, count: int) -> np.ndarray:
        """Next block, shape (5, n) with n <= count; empty when exhausted."""
        n = min(count, self._total - self._pos)
        if n <= 0:
            return np.empty((N_CHANNELS, 0))
        start = self._pos
        t = (start + np.arange(n)) / self._fs
        gains = self._gain_timeline(t)
        bed_idx = (start + np.arange(n)) % self._period_n
        out = np.zeros((N_CHANNELS, n))
        for c in range(N_CHANNELS):
            for b in range(N_BANDS):
                out[c] += np.sqrt(gains[c, b]) * self._bed[c][b][bed_idx]
        self._add_artifacts(out, start, n)
        self._pos += n
        return out

    def _gain_timeline(self, t: np.ndarray) -> np.ndarray:
        """(channel, band, sample) gains: resting shape times episode gains."""
        n = t.size
        gains = np.empty((N_CHANNELS, N_BANDS, n))
        for b in Band:
            gains[:, b, :] = RESTING_GAINS[b]
        lo, hi = t[0], t[-1]
        for ep in self._episodes:
            if ep.kind != "mental" or ep.start - GAIN_RAMP_S > hi or ep.end + GAIN_RAMP_S <= lo:
                continue
            # raised-cosine weight: 0 outside the ramps, 1 on [start, end)
            w = np.zeros(n)
            inside = (t >= ep.start) & (t < ep.end)
            w[inside] = 1.0
            up = (t >= ep.start - GAIN_RAMP_S) & (t < ep.start)
            w[up] = 0.5 - 0.5 * np.cos(np.pi * (t[up] - ep.start + GAIN_RAMP_S) / GAIN_RAMP_S)
            down = (t >= ep.end) & (t < ep.end + GAIN_RAMP_S)
            w[down] = 0.5 + 0.5 * np.cos(np.pi * (t[down] - ep.end) / GAIN_RAMP_S)
            if not w.any():
                continue
            sig = self.command_signatures[ep.label]
            for (c, b), g in sig.modulation.items():
                gains[int(c), int(b)] *= 1.0 + (g - 1.0) * w
        return gains

    def _add_artifacts(self, block: np.ndarray, start: int, n: int) -> None:
        for inst in self._bursts:
            for c, wave in inst.samples_by_channel.items():
                a = max(inst.start_sample, start)
                b = min(inst.start_sample + wave.size, start + n)
                if a < b:
                    block[c, a - start : b - start] += wave[a - inst.start_sample : b - inst.start_sample]


def ground_truth(script: ScenarioScript) -> list[WindowTruth]:
    """Per-window labels on the 2 s / 1 s segmentation grid.

    A window takes an episode's label iff the episode covers at least
    half of it; ties at exactly half go to the episode (labeled), and
    between two episodes the larger overlap wins, earlier start on a tie.
    """
    if script.duration < WINDOW_SECONDS:
        return []
    n_windows = int((script.duration - WINDOW_SECONDS) / HOP_SECONDS + 1e-9) + 1
    truths = []
    for i in range(n_windows):
        w0 = i * HOP_SECONDS
        w1 = w0 + WINDOW_SECONDS
        labels = {"mental": NEUTRAL, "facial": NEUTRAL}
        for kind in labels:
            best_overlap = 0.0
            best: Episode | None = None
            for ep in script.episodes:
                if ep.kind != kind:
                    continue
                overlap = min(w1, ep.end) - max(w0, ep.start)
                if overlap > best_overlap + 1e-9 or (
                    best is not None
                    and abs(overlap - best_overlap) <= 1e-9
                    and ep.start < best.start
                ):
                    best_overlap = overlap
                    best = ep
            if best is not None and best_overlap >= WINDOW_SECONDS / 2 - 1e-9:
                labels[kind] = best.label
        truths.append(WindowTruth(win=i, com=labels["mental"], fac=labels["facial"]))
    return truths


def generate(
    script: ScenarioScript,
    command_signatures: Mapping[str, CommandSignature] | None = None,
    artifact_signatures: Mapping[str, ArtifactSignature] | None = None,
    noise: NoiseModel | None = None,
) -> tuple[list[EegFrame], list[WindowTruth]]:
    """Whole scenario in one shot: frames plus per-window ground truth."""
    src = SynthSource(script, command_signatures, artifact_signatures, noise)
    fs = script.sample_rate
    data = src.read(int(round(script.duration * fs)))
    frames = [
        EegFrame(t=i / fs, values=tuple(float(v) for v in data[:, i]))
        for i in range(data.shape[1])
    ]
    return frames, ground_truth(script)


# --- replay and scenario files -------------------------------------------

def save_replay(frames: Sequence[EegFrame], path: str | Path) -> None:
    """JSON Lines, one frame per line: {"t": seconds, "v": [5 uV values]}."""
    with open(path, "w") as fh:
        for f in frames:
            fh.write(json.dumps({"t": f.t, "v": list(f.values)}) + "\n")


def load_replay(path: str | Path) -> list[EegFrame]:
    frames: list[EegFrame] = []
    last_t = -math.inf
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                frame = EegFrame(t=float(obj["t"]), values=tuple(float(v) for v in obj["v"]))
            except (ValueError, KeyError, TypeError) as exc:
                raise ReplayError(f"{path}: bad frame on line {lineno}: {exc}") from exc
            if frame.t <= last_t:
                raise ReplayError(
                    f"{path}: non-monotonic timestamp on line {lineno}"
                )
            last_t = frame.t
            frames.append(frame)
    return frames


def save_truth(truths: Sequence[WindowTruth], path: str | Path) -> None:
    """Sidecar JSONL: {"win": index, "com": label, "fac": label}."""
    with open(path, "w") as fh:
        for t in truths:
            fh.write(json.dumps({"win": t.win, "com": t.com, "fac": t.fac}) + "\n")


def load_truth(path: str | Path) -> list[WindowTruth]:
    out: list[WindowTruth] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                out.append(WindowTruth(win=int(obj["win"]), com=obj["com"], fac=obj["fac"]))
            except (ValueError, KeyError, TypeError) as exc:
                raise ReplayError(f"{path}: bad truth on line {lineno}: {exc}") from exc
    return out


def scenario_to_dict(script: ScenarioScript) -> dict:
    return {
        "duration": script.duration,
        "sample_rate": script.sample_rate,
        "episodes": [
            {"start": e.start, "length": e.length, "kind": e.kind, "label": e.label}
            for e in script.episodes
        ],
    }


def scenario_from_dict(obj: dict) -> ScenarioScript:
    try:
        episodes = tuple(
            Episode(
                start=float(e["start"]),
                length=float(e["length"]),
                kind=e["kind"],
                label=e["label"],
            )
            for e in obj.get("episodes", [])
        )
        return ScenarioScript(
            duration=float(obj["duration"]),
            episodes=episodes,
            sample_rate=int(obj.get("sample_rate", 128)),
        )
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"bad scenario document: {exc}") from exc


def save_scenario(script: ScenarioScript, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(script), indent=2) + "\n")


def load_scenario(path: str | Path) -> ScenarioScript:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: not valid JSON: {exc}") from exc
    return scenario_from_dict(obj)
