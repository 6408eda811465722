"""Per-user profiles: neutral baseline, command centroids, facial rules.

The mental-command model is a z-scored nearest-centroid classifier with a
neutral rejection radius.  Training follows the headset protocol: record
neutral first (it sets the normalization statistics and the radius), then
record each command; re-training a label re-averages over every window
ever accepted for it, so profiles keep their raw training windows.

Facial expressions are not trained; they are detected by amplitude and
band-power rules on the raw filtered window.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.signal import welch as _welch

from .dsp import Channel, EegWindow, N_FEATURES
from .vocab import FACIAL_VOCABULARY, MENTAL_COMMANDS, MENTAL_VOCABULARY, NEUTRAL

PROFILE_VERSION = 1

#: Variance floor: identical training windows must not divide by zero.
STD_FLOOR = 1e-6

#: Neutral rejection radius never shrinks below this.
RADIUS_FLOOR = 1.0

#: Neutral radius percentile over training-window distances.
RADIUS_PERCENTILE = 95.0

#: Relative slack on the rejection comparison.  A window statistically
#: identical to the worst training window lands within rounding of the
#: radius; without slack its label would depend on float noise.
RADIUS_RTOL = 1e-9

#: Minimum windows per accepted recording: one 8 s take at 2 s / 1 s.
MIN_TRAINING_WINDOWS = 7


class InsufficientDataError(ValueError):
    """Fewer training windows than one full recording provides."""


class TrainingOrderError(RuntimeError):
    """Operation requires earlier training steps (neutral comes first)."""


class UnknownLabelError(ValueError):
    """Label outside the closed vocabulary."""


class ProfileFormatError(ValueError):
    """Profile file does not parse."""


class ProfileVersionError(ProfileFormatError):
    """Profile file has an unsupported version."""


@dataclass(frozen=True)
class Detection:
    """One classified window on the com or fac stream."""

    kind: str  # "com" or "fac"
    label: str
    power: float  # [0, 1]
    window_start: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("com", "fac"):
            raise ValueError(f"kind must be com or fac, got {self.kind!r}")
        if not 0.0 <= self.power <= 1.0:
            raise ValueError(f"power must be in [0,1], got {self.power}")


@dataclass(frozen=True)
class Profile:
    """Trained state for one user.  Immutable; training returns new values.

    Raw training windows are kept per label so that re-training appends
    and re-averages, and so neutral re-training can re-normalize every
    centroid consistently.
    """

    name: str
    version: int = PROFILE_VERSION
    feature_mean: np.ndarray | None = None
    feature_std: np.ndarray | None = None
    centroids: dict[str, np.ndarray] = field(default_factory=dict)
    neutral_radius: float = 0.0
    training_windows: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def neutral_trained(self) -> bool:
        return self.feature_mean is not None

    @property
    def trained_labels(self) -> frozenset[str]:
        return frozenset(self.centroids)

    def zscore(self, v: np.ndarray) -> np.ndarray:
        if not self.neutral_trained:
            raise TrainingOrderError("neutral baseline not trained yet")
        return (np.asarray(v) - self.feature_mean) / self.feature_std


def _as_windows(windows) -> np.ndarray:
    arr = np.asarray(windows, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != N_FEATURES:
        raise ValueError(f"expected (n, {N_FEATURES}) feature windows, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite feature value")
    return arr


def _accumulate(profile: Profile, label: str, new: np.ndarray) -> dict[str, np.ndarray]:
    stored = dict(profile.training_windows)
    if label in stored:
        stored[label] = np.vstack([stored[label], new])
    else:
        stored[label] = new
    return stored


def _recompute_centroids(
    mean: np.ndarray, std: np.ndarray, stored: dict[str, np.ndarray]
) -> dict[str, np.ndarray]:
    return {
        label: (wins.mean(axis=0) - mean) / std
        for label, wins in stored.items()
        if label != NEUTRAL
    }


def train_neutral(profile: Profile, windows) -> Profile:
    """Set normalization statistics and the rejection radius.

    Repeated neutral recordings accumulate; statistics are recomputed
    over the union, and existing command centroids are re-normalized.
    """
    new = _as_windows(windows)
    if new.shape[0] < MIN_TRAINING_WINDOWS:
        raise InsufficientDataError(
            f"need >= {MIN_TRAINING_WINDOWS} windows, got {new.shape[0]}"
        )
    stored = _accumulate(profile, NEUTRAL, new)
    all_neutral = stored[NEUTRAL]
    mean = all_neutral.mean(axis=0)
    std = np.maximum(all_neutral.std(axis=0), STD_FLOOR)
    dists = np.linalg.norm((all_neutral - mean) / std, axis=1)
    # nearest-rank percentile: with the 7-window minimum recording the
    # radius has to reach the largest observed distance, or windows of
    # the same quality as the training data keep getting rejected
    radius = max(
        RADIUS_FLOOR, float(np.percentile(dists, RADIUS_PERCENTILE, method="higher"))
    )
    return replace(
        profile,
        feature_mean=mean,
        feature_std=std,
        neutral_radius=radius,
        training_windows=stored,
        centroids=_recompute_centroids(mean, std, stored),
    )


def train_command(profile: Profile, label: str, windows) -> Profile:
    """Add or extend a command centroid from accumulated raw windows."""
    if not profile.neutral_trained:
        raise TrainingOrderError("train neutral before any command")
    if label not in MENTAL_COMMANDS:
        raise UnknownLabelError(f"unknown mental command {label!r}")
    new = _as_windows(windows)
    if new.shape[0] < MIN_TRAINING_WINDOWS:
        raise InsufficientDataError(
            f"need >= {MIN_TRAINING_WINDOWS} windows, got {new.shape[0]}"
        )
    stored = _accumulate(profile, label, new)
    return replace(
        profile,
        training_windows=stored,
        centroids=_recompute_centroids(profile.feature_mean, profile.feature_std, stored),
    )


def classify(profile: Profile, v: np.ndarray, window_start: float = 0.0) -> Detection:
    """Nearest centroid with neutral rejection; power is a softmax weight."""
    if not profile.neutral_trained:
        raise TrainingOrderError("neutral baseline not trained yet")
    if not profile.centroids:
        raise TrainingOrderError("no command trained yet")
    z = profile.zscore(v)
    labels = sorted(profile.centroids)  # lexicographic: ties pick the first
    dists = np.array([np.linalg.norm(z - profile.centroids[lab]) for lab in labels])
    best = int(np.argmin(dists))
    if dists[best] > profile.neutral_radius * (1.0 + RADIUS_RTOL):
        return Detection(kind="com", label=NEUTRAL, power=0.0, window_start=window_start)
    shifted = np.exp(dists[best] - dists)  # numerically safe softmax of -d
    power = float(shifted[best] / shifted.sum())
    return Detection(
        kind="com",
        label=labels[best],
        power=min(1.0, max(0.0, power)),
        window_start=window_start,
    )


# --- facial expression rules ---------------------------------------------

#: Bilateral frontal peak threshold, uV.
FRONTAL_PEAK_UV = 100.0
#: Peaks this far apart in time still count as one bilateral event.
BILATERAL_SYNC_S = 0.05
#: Bilateral positive peaks above this are a blink, below it a surprise.
BLINK_PEAK_UV = 130.0
#: Temporal 20-43 Hz power must beat Pz by this factor to call a burst.
TEMPORAL_RATIO = 10.0
#: Burst RMS above this is a clench, below a smile.
CLENCH_RMS_UV = 50.0
#: Envelope threshold marking burst samples.
BURST_ENVELOPE_UV = 25.0

_HIGH_BAND = (20.0, 43.0)


def _band_power_single(x: np.ndarray, fs: int, low: float, high: float) -> float:
    freqs, psd = _welch(
        x, fs=fs, window="hann", nperseg=fs, noverlap=fs // 2, detrend=False
    )
    mask = (freqs >= low) & (freqs <= high)
    return float(np.trapezoid(psd[mask], freqs[mask]))


def _burst_rms(channels: list[np.ndarray], fs: int) -> float:
    """RMS over samples whose short-time envelope exceeds the burst level."""
    kernel = np.ones(max(1, int(round(0.05 * fs)))) / max(1, int(round(0.05 * fs)))
    collected = []
    for x in channels:
        envelope = np.sqrt(np.convolve(x * x, kernel, mode="same"))
        hot = x[envelope > BURST_ENVELOPE_UV]
        if hot.size:
            collected.append(hot)
    if not collected:
        return 0.0
    allhot = np.concatenate(collected)
    return float(np.sqrt(np.mean(allhot * allhot)))


def detect_facial(window: EegWindow, window_start: float | None = None) -> Detection:
    """Rule cascade on the raw filtered window; always returns a detection.

    1. Frontal peaks on AF3 and AF4 both past the threshold within the
       sync tolerance: frown when both negative, blink when both positive
       and strong, surprise when both positive and weaker; a single-sided
       peak is the matching wink.
    2. Else a 20-43 Hz temporal burst (T7+T8 well above Pz): clench when
       the burst RMS is high, smile otherwise.
    3. Else neutral.
    """
    start = window.start_time if window_start is None else window_start
    fs = window.sample_rate
    af3 = window.samples[Channel.AF3]
    af4 = window.samples[Channel.AF4]

    i3 = int(np.argmax(np.abs(af3)))
    i4 = int(np.argmax(np.abs(af4)))
    # the weaker channel is judged at its own extremum inside the sync
    # neighborhood of the stronger one: background noise riding a wide
    # transient plateau must not desynchronize two simultaneous events
    sync_n = int(round(BILATERAL_SYNC_S * fs))
    if abs(float(af3[i3])) >= abs(float(af4[i4])):
        lo = max(0, i3 - sync_n)
        i4 = lo + int(np.argmax(np.abs(af4[lo : i3 + sync_n + 1])))
    else:
        lo = max(0, i4 - sync_n)
        i3 = lo + int(np.argmax(np.abs(af3[lo : i4 + sync_n + 1])))
    p3, p4 = float(af3[i3]), float(af4[i4])
    hit3, hit4 = abs(p3) > FRONTAL_PEAK_UV, abs(p4) > FRONTAL_PEAK_UV

    if hit3 and hit4:
        smaller = min(abs(p3), abs(p4))
        power = min(1.0, (smaller - FRONTAL_PEAK_UV) / FRONTAL_PEAK_UV)
        if p3 < 0 and p4 < 0:
            label = "frown"
        elif p3 > 0 and p4 > 0 and smaller > BLINK_PEAK_UV:
            label = "blink"
        elif p3 > 0 and p4 > 0:
            label = "surprise"
        else:
            # mixed polarity has no assigned pattern; read it as a blink,
            # the safe interpretation (blink maps to stop downstream)
            label = "blink"
        return Detection(kind="fac", label=label, power=power, window_start=start)
    if hit3 != hit4:
        peak = abs(p3) if hit3 else abs(p4)
        label = "winkL" if hit3 else "winkR"
        power = min(1.0, (peak - FRONTAL_PEAK_UV) / FRONTAL_PEAK_UV)
        return Detection(kind="fac", label=label, power=power, window_start=start)

    t7 = window.samples[Channel.T7]
    t8 = window.samples[Channel.T8]
    pz = window.samples[Channel.Pz]
    temporal = _band_power_single(t7, fs, *_HIGH_BAND) + _band_power_single(
        t8, fs, *_HIGH_BAND
    )
    reference = max(_band_power_single(pz, fs, *_HIGH_BAND), 1e-12)
    ratio = temporal / reference
    if ratio > TEMPORAL_RATIO:
        rms = _burst_rms([t7, t8], fs)
        label = "clench" if rms > CLENCH_RMS_UV else "smile"
        power = min(1.0, (ratio - TEMPORAL_RATIO) / TEMPORAL_RATIO)
        return Detection(kind="fac", label=label, power=power, window_start=start)

    return Detection(kind="fac", label=NEUTRAL, power=0.0, window_start=start)


# --- persistence ----------------------------------------------------------

def profile_to_dict(profile: Profile) -> dict:
    return {
        "name": profile.name,
        "version": profile.version,
        "feature_mean": None
        if profile.feature_mean is None
        else profile.feature_mean.tolist(),
        "feature_std": None
        if profile.feature_std is None
        else profile.feature_std.tolist(),
        "centroids": {k: v.tolist() for k, v in sorted(profile.centroids.items())},
        "neutral_radius": profile.neutral_radius,
        "training_windows": {
            k: v.tolist() for k, v in sorted(profile.training_windows.items())
        },
    }


def profile_from_dict(obj: dict) -> Profile:
    try:
        version = int(obj["version"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ProfileFormatError(f"profile has no usable version: {exc}") from exc
    if version != PROFILE_VERSION:
        raise ProfileVersionError(
            f"profile version {version} not supported (expected {PROFILE_VERSION})"
        )
    try:
        mean = obj["feature_mean"]
        std = obj["feature_std"]
        return Profile(
            name=obj["name"],
            version=version,
            feature_mean=None if mean is None else np.asarray(mean, dtype=float),
            feature_std=None if std is None else np.asarray(std, dtype=float),
            centroids={
                k: np.asarray(v, dtype=float) for k, v in obj["centroids"].items()
            },
            neutral_radius=float(obj["neutral_radius"]),
            training_windows={
                k: np.asarray(v, dtype=float)
                for k, v in obj["training_windows"].items()
            },
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ProfileFormatError(f"malformed profile document: {exc}") from exc


def save_profile(profile: Profile, path: str | Path) -> None:
    Path(path).write_text(json.dumps(profile_to_dict(profile), indent=2) + "\n")


def load_profile(path: str | Path) -> Profile:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ProfileFormatError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ProfileFormatError(f"{path}: profile must be a JSON object")
    return profile_from_dict(obj)


@dataclass
class TrainingSession:
    """State machine for one recording: recording -> ready -> accepted/rejected."""

    profile_name: str
    label: str
    windows: list = field(default_factory=list)
    state: str = "recording"

    def __post_init__(self) -> None:
        if self.label not in MENTAL_VOCABULARY and self.label not in FACIAL_VOCABULARY:
            raise UnknownLabelError(f"unknown training label {self.label!r}")

    def add_window(self, v: np.ndarray) -> None:
        if self.state != "recording":
            raise TrainingOrderError(f"cannot record in state {self.state!r}")
        self.windows.append(np.asarray(v, dtype=float))
        if len(self.windows) >= MIN_TRAINING_WINDOWS:
            self.state = "ready"

    def mark_accepted(self) -> None:
        if self.state != "ready":
            raise TrainingOrderError(f"cannot accept in state {self.state!r}")
        self.state = "accepted"

    def mark_rejected(self) -> None:
        if self.state not in ("recording", "ready"):
            raise TrainingOrderError(f"cannot reject in state {self.state!r}")
        self.state = "rejected"
