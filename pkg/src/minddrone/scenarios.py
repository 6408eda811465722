"""Canned scenario layouts for training sittings and accuracy runs.

Everything here is pure geometry: which episodes land where on the
timeline.  Signal content comes from the synthesis module; pairing a
training script and an evaluation script under the same noise seed
reproduces the one-sitting protocol (the periodic noise bed depends
only on the seed, not on the script length).
"""

from __future__ import annotations

from .synth import NOISE_PERIOD_S, Episode, ScenarioScript

BENCHMARK_LABELS = ("push", "pull", "left", "right")

# Training layout: settle-in, a quiet stretch for the resting
# baseline, then 8 s recordings on a 10 s pitch.  Integer-aligned so
# every recording contributes exactly 7 full analysis windows.
TRAIN_FIRST_EPISODE_S = 30.0
TRAIN_PITCH_S = 10.0
TRAIN_EPISODE_S = 8.0

# Evaluation layout: short episodes with neutral gaps, offset half a
# window so the edges land mid-grid and boundary behavior is exercised
# rather than dodged.
EVAL_LEAD_S = 10.5
EVAL_EPISODE_S = 4.0
EVAL_GAP_S = 5.0


def training_script(
    labels=BENCHMARK_LABELS, repeats: int = 1, sample_rate: int = 128
) -> ScenarioScript:
    """One sitting's training recordings.

    With repeats > 1 each label gets that many 8 s recordings, grouped
    label by label, which is how extra training data accumulates into
    the same centroid.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    episodes = []
    slot = 0
    for label in labels:
        for _ in range(repeats):
            start = TRAIN_FIRST_EPISODE_S + TRAIN_PITCH_S * slot
            episodes.append(Episode(start, TRAIN_EPISODE_S, "mental", label))
            slot += 1
    duration = TRAIN_FIRST_EPISODE_S + TRAIN_PITCH_S * slot + 2.0
    return ScenarioScript(
        duration=duration, episodes=tuple(episodes), sample_rate=sample_rate
    )


def evaluation_script(
    labels=BENCHMARK_LABELS,
    episodes_per_label: int = 10,
    sample_rate: int = 128,
) -> ScenarioScript:
    """Held-out command stream: round-robin episodes with neutral gaps.

    The default four labels at ten episodes each gives the 370 s
    benchmark stream.
    """
    if episodes_per_label < 1:
        raise ValueError("episodes_per_label must be >= 1")
    episodes = []
    n = len(labels) * episodes_per_label
    pitch = EVAL_EPISODE_S + EVAL_GAP_S
    for k in range(n):
        episodes.append(
            Episode(
                EVAL_LEAD_S + pitch * k,
                EVAL_EPISODE_S,
                "mental",
                labels[k % len(labels)],
            )
        )
    duration = EVAL_LEAD_S + pitch * (n - 1) + EVAL_EPISODE_S + 4.5
    return ScenarioScript(
        duration=duration, episodes=tuple(episodes), sample_rate=sample_rate
    )


def latency_script(
    episodes: int = 20, label: str = "push", sample_rate: int = 128
) -> ScenarioScript:
    """Repeated single-command episodes for onset-to-command timing.

    Episodes repeat at the resting-bed period so every trial sees the
    identical background segment: the run then measures pipeline timing
    (window + hold) rather than per-phase classifier variance, and the
    onset phase is one the classifier detects on its first full window.
    """
    pitch = NOISE_PERIOD_S
    first = EVAL_LEAD_S
    starts = [first + pitch * k for k in range(episodes)]
    eps = tuple(Episode(s, EVAL_EPISODE_S, "mental", label) for s in starts)
    duration = starts[-1] + EVAL_EPISODE_S + 4.5
    return ScenarioScript(
        duration=duration, episodes=eps, sample_rate=sample_rate
    )


def neutral_script(duration: float = 60.0, sample_rate: int = 128) -> ScenarioScript:
    """Nothing but resting signal."""
    return ScenarioScript(duration=duration, sample_rate=sample_rate)
