"""Signal kernel: windows, band-pass filtering, Welch band powers, features.

Everything here is a pure function of its inputs and safe to call from any
thread.  The canonical vector layouts are frozen contracts consumed by the
classifier and by stored profiles:

  * channels are always ordered AF3, T7, Pz, T8, AF4 (rows of a window),
  * bands are always ordered Delta, Theta, Alpha, Beta, Gamma,
  * a feature vector is the 5x5 band-power matrix flattened channel-major,
    v[5*c + b] = log10(power[c][b] + 1e-12).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Mapping, Sequence

import numpy as np
from scipy import signal as _sig


class Channel(IntEnum):
    """Electrode sites of the five-channel headset, in canonical order."""

    AF3 = 0
    T7 = 1
    Pz = 2
    T8 = 3
    AF4 = 4


class Band(IntEnum):
    """EEG frequency bands, in canonical (ascending-frequency) order."""

    Delta = 0
    Theta = 1
    Alpha = 2
    Beta = 3
    Gamma = 4


N_CHANNELS = len(Channel)
N_BANDS = len(Band)
N_FEATURES = N_CHANNELS * N_BANDS

SUPPORTED_RATES = (128, 256)

#: Hardware analog front-end passband; band ranges must stay inside it.
PASSBAND_HZ = (0.2, 43.0)

#: Additive floor under the log10 in feature vectors, in uV^2.
POWER_FLOOR = 1e-12

#: Clinical-convention band edges, upper edge capped at the filter passband.
DEFAULT_BANDS: dict[Band, tuple[float, float]] = {
    Band.Delta: (0.5, 4.0),
    Band.Theta: (4.0, 8.0),
    Band.Alpha: (8.0, 13.0),
    Band.Beta: (13.0, 30.0),
    Band.Gamma: (30.0, 43.0),
}

WINDOW_SECONDS = 2.0
HOP_SECONDS = 1.0


@dataclass(frozen=True)
class EegFrame:
    """One sample instant: a timestamp and five microvolt readings."""

    t: float
    values: tuple[float, float, float, float, float]

    def __post_init__(self) -> None:
        if len(self.values) != N_CHANNELS:
            raise ValueError(f"frame needs {N_CHANNELS} values, got {len(self.values)}")
        if self.t < 0 or not np.isfinite(self.t):
            raise ValueError(f"bad frame timestamp {self.t}")
        if not all(np.isfinite(v) for v in self.values):
            raise ValueError("non-finite sample value")


@dataclass(frozen=True)
class EegWindow:
    """Channel-major slice of the stream: samples[c, i] in uV, row per Channel."""

    sample_rate: int
    samples: np.ndarray
    start_time: float = 0.0

    def __post_init__(self) -> None:
        if self.sample_rate not in SUPPORTED_RATES:
            raise ValueError(f"sample_rate must be one of {SUPPORTED_RATES}")
        if self.samples.ndim != 2 or self.samples.shape[0] != N_CHANNELS:
            raise ValueError(f"samples must be ({N_CHANNELS}, N), got {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("non-finite sample in window")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate


@dataclass(frozen=True)
class FilterCoefficients:
    """Second-order-section cascade; each section is (b0, b1, b2, a1, a2), a0 = 1."""

    sections: tuple[tuple[float, float, float, float, float], ...]
    sample_rate: int

    def as_sos(self) -> np.ndarray:
        """scipy-style (n_sections, 6) array."""
        out = np.empty((len(self.sections), 6))
        for i, (b0, b1, b2, a1, a2) in enumerate(self.sections):
            out[i] = (b0, b1, b2, 1.0, a1, a2)
        return out


def validate_bands(bands: Mapping[Band, tuple[float, float]]) -> None:
    """Band ranges must be ascending, contiguous, and inside the passband."""
    if set(bands) != set(Band):
        raise ValueError("band table must cover exactly the five bands")
    edges = [bands[b] for b in Band]
    for low, high in edges:
        if not low < high:
            raise ValueError(f"band range ({low}, {high}) not ascending")
    for (_, high), (low, _) in zip(edges, edges[1:]):
        if high != low:
            raise ValueError("band ranges must be contiguous")
    if edges[0][0] < PASSBAND_HZ[0] or edges[-1][1] > PASSBAND_HZ[1]:
        raise ValueError(f"band span must lie inside {PASSBAND_HZ}")


def design_bandpass(
    low_hz: float, high_hz: float, sample_rate: int, order: int = 4
) -> FilterCoefficients:
    """Butterworth band-pass as a second-order-section cascade.

    `order` is the transfer-function order (pole count); the magnitude
    response is 1/sqrt(2) at both cutoffs by construction.
    """
    if not 0 < low_hz < high_hz < sample_rate / 2:
        raise ValueError(
            f"need 0 < low < high < Nyquist, got ({low_hz}, {high_hz}) at fs={sample_rate}"
        )
    if order not in (2, 4, 6, 8):
        raise ValueError(f"order must be 2, 4, 6 or 8, got {order}")
    sos = _sig.butter(
        order // 2, [low_hz, high_hz], btype="bandpass", fs=sample_rate, output="sos"
    )
    sections = tuple(
        (float(r[0]) / r[3], float(r[1]) / r[3], float(r[2]) / r[3],
         float(r[4]) / r[3], float(r[5]) / r[3])
        for r in sos
    )
    coeffs = FilterCoefficients(sections=sections, sample_rate=sample_rate)
    for _, _, _, a1, a2 in coeffs.sections:
        poles = np.roots([1.0, a1, a2])
        if np.any(np.abs(poles) >= 1.0):
            raise ValueError("designed section is unstable")
    return coeffs


def response_magnitude(coeffs: FilterCoefficients, freq_hz: float) -> float:
    """|H(e^{j 2 pi f / fs})| of the cascade at one frequency."""
    if freq_hz == 0.0:
        # z = 1 exactly: evaluate each section as a real ratio so the
        # band-pass zero at DC comes out as an exact 0.
        mag = 1.0
        for b0, b1, b2, a1, a2 in coeffs.sections:
            mag *= (b0 + b1 + b2) / (1.0 + a1 + a2)
        return abs(mag)
    z = np.exp(2j * np.pi * freq_hz / coeffs.sample_rate)
    zi1, zi2 = 1.0 / z, 1.0 / (z * z)
    h = 1.0 + 0.0j
    for b0, b1, b2, a1, a2 in coeffs.sections:
        h *= (b0 + b1 * zi1 + b2 * zi2) / (1.0 + a1 * zi1 + a2 * zi2)
    return float(np.abs(h))


def apply_filter(coeffs: FilterCoefficients, window: EegWindow) -> EegWindow:
    """Filter each channel independently, causally, from zero initial state."""
    if coeffs.sample_rate != window.sample_rate:
        raise ValueError(
            f"filter designed for {coeffs.sample_rate} Hz, window is {window.sample_rate} Hz"
        )
    filtered = _sig.sosfilt(coeffs.as_sos(), window.samples, axis=1)
    return EegWindow(
        sample_rate=window.sample_rate,
        samples=np.asarray(filtered),
        start_time=window.start_time,
    )


def frames_to_array(frames: Sequence[EegFrame]) -> np.ndarray:
    """(N_CHANNELS, n) matrix from a frame sequence."""
    if not frames:
        return np.empty((N_CHANNELS, 0))
    return np.array([f.values for f in frames]).T


def segment(
    frames: Sequence[EegFrame],
    sample_rate: int,
    window_s: float = WINDOW_SECONDS,
    hop_s: float = HOP_SECONDS,
) -> list[EegWindow]:
    """Sliding windows over an equally spaced frame sequence.

    A partial tail is discarded; a stream shorter than one window yields
    an empty list.  Count is floor((D - window_s) / hop_s) + 1.
    """
    if window_s <= 0:
        raise ValueError("window_s must be positive")
    if not 0 < hop_s <= window_s:
        raise ValueError("need 0 < hop_s <= window_s")
    if sample_rate not in SUPPORTED_RATES:
        raise ValueError(f"sample_rate must be one of {SUPPORTED_RATES}")
    n = len(frames)
    win_n = int(round(window_s * sample_rate))
    hop_n = int(round(hop_s * sample_rate))
    if n < win_n:
        return []
    times = np.array([f.t for f in frames])
    if n > 1:
        dt = np.diff(times)
        if np.any(np.abs(dt - 1.0 / sample_rate) > 0.25 / sample_rate):
            raise ValueError("frames are not equally spaced at 1/sample_rate")
    data = frames_to_array(frames)
    windows = []
    for start in range(0, n - win_n + 1, hop_n):
        windows.append(
            EegWindow(
                sample_rate=sample_rate,
                samples=data[:, start : start + win_n].copy(),
                start_time=float(times[start]),
            )
        )
    return windows


def band_power(
    window: EegWindow, bands: Mapping[Band, tuple[float, float]] | None = None
) -> np.ndarray:
    """Welch band powers, shape (N_CHANNELS, N_BANDS), in uV^2.

    1 s Hann sub-windows with 50 % overlap, per-segment periodograms
    averaged by mean; band power is the PSD integral over the band range.
    Needs at least 1 s of signal for usable Delta resolution.
    """
    if bands is None:
        bands = DEFAULT_BANDS
    validate_bands(bands)
    fs = window.sample_rate
    if window.n_samples < fs:
        raise ValueError(
            f"window of {window.n_samples} samples is shorter than 1 s at {fs} Hz"
        )
    freqs, psd = _sig.welch(
        window.samples,
        fs=fs,
        window="hann",
        nperseg=fs,
        noverlap=fs // 2,
        detrend=False,
        axis=1,
    )
    powers = np.empty((N_CHANNELS, N_BANDS))
    for band in Band:
        low, high = bands[band]
        mask = (freqs >= low) & (freqs <= high)
        powers[:, band] = np.trapezoid(psd[:, mask], freqs[mask], axis=1)
    return powers


def features(powers: np.ndarray) -> np.ndarray:
    """Log-power feature vector, length 25, channel-major then band."""
    powers = np.asarray(powers)
    if powers.shape != (N_CHANNELS, N_BANDS):
        raise ValueError(f"expected ({N_CHANNELS}, {N_BANDS}) powers, got {powers.shape}")
    return np.log10(powers + POWER_FLOOR).reshape(N_FEATURES)
