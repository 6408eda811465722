"""Offline scoring: train a profile from a scripted sitting, replay a
held-out script through the filter/feature pipeline, classify every
window, and compare against the script's own ground truth.

No sockets anywhere in this module; the wire services reuse the same
pipeline, so offline numbers carry over to the live system.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from .classifier import (
    NEUTRAL,
    Profile,
    TrainingOrderError,
    classify,
    train_command,
    train_neutral,
)
from .dsp import HOP_SECONDS, WINDOW_SECONDS
from .pipeline import PipelineConfig, StreamPipeline, windows_inside
from .synth import (
    NoiseModel,
    ScenarioScript,
    SynthSource,
    ground_truth,
)

log = logging.getLogger(__name__)

NEUTRAL_TRAIN_SECONDS = 8.0
#: Quiet stretch must start at least this far in so the filter's
#: startup transient never leaks into the resting baseline.
NEUTRAL_GUARD_S = 4.0
#: Gap kept between the neutral stretch and the first recording (the
#: synthesis ramps episode gain in half a second early).
NEUTRAL_CLEARANCE_S = 2.0

#: Consecutive same-label windows a command hold needs; latency is
#: measured to the end of the window that completes the hold.
HOLD_WINDOWS = 2


@dataclass(frozen=True)
class LabelScore:
    precision: float
    recall: float
    support: int


@dataclass(frozen=True)
class LatencySummary:
    """Onset-to-hold timing over a script's mental episodes.

    An episode counts as detected when two consecutive grid windows
    both classify to its label; the latency sample is the second
    window's end minus the episode onset.  Percentiles are nearest-rank
    over detected episodes and omitted when nothing was detected.
    """

    episodes: int
    detected: int
    p50: float | None = None
    p90: float | None = None
    p95: float | None = None
    worst: float | None = None


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    labels: tuple[str, ...]  # confusion axis, neutral first
    confusion: tuple[tuple[int, ...], ...]  # [truth row][predicted col]
    scores: tuple[tuple[str, LabelScore], ...]  # aligned with labels
    window_count: int
    latency: LatencySummary | None

    def score(self, label: str) -> LabelScore:
        for name, sc in self.scores:
            if name == label:
                return sc
        raise KeyError(label)


def windows_of(
    script: ScenarioScript,
    noise: NoiseModel | None = None,
    command_signatures=None,
    artifact_signatures=None,
    config: PipelineConfig | None = None,
):
    """Synthesize a script and push it through the pipeline once."""
    src = SynthSource(script, command_signatures, artifact_signatures, noise)
    data = src.read(int(round(script.duration * script.sample_rate)))
    pipe = StreamPipeline(config or PipelineConfig())
    windows, _ = pipe.push(data)
    return windows


def train_from_script(
    script: ScenarioScript,
    labels=None,
    profile: Profile | None = None,
    name: str = "default",
    noise: NoiseModel | None = None,
    command_signatures=None,
    artifact_signatures=None,
    config: PipelineConfig | None = None,
) -> Profile:
    """Resting baseline first, then every mental recording in order.

    The baseline comes from the 8 s quiet stretch ending shortly
    before the first recording; a scenario that leaves no such stretch
    cannot satisfy the neutral-first rule and is refused.  Passing an
    existing profile accumulates into it (window counts grow, command
    centroids re-average).
    """
    mental = sorted(
        (ep for ep in script.episodes if ep.kind == "mental"), key=lambda e: e.start
    )
    if labels is not None:
        wanted = set(labels)
        missing = wanted - {ep.label for ep in mental}
        if missing:
            raise ValueError(f"scenario has no recording for {sorted(missing)}")
        mental = [ep for ep in mental if ep.label in wanted]

    if mental:
        span_end = mental[0].start - NEUTRAL_CLEARANCE_S
    else:
        span_end = NEUTRAL_GUARD_S + NEUTRAL_TRAIN_SECONDS
    span_start = span_end - NEUTRAL_TRAIN_SECONDS
    if span_start < NEUTRAL_GUARD_S or span_end > script.duration:
        raise TrainingOrderError(
            "neutral must be trained first, and this scenario leaves no "
            f"{NEUTRAL_TRAIN_SECONDS:g} s quiet stretch (starting at least "
            f"{NEUTRAL_GUARD_S:g} s in) to record it from"
        )

    processed = windows_of(
        script, noise, command_signatures, artifact_signatures, config
    )
    profile = profile if profile is not None else Profile(name=name)
    neutral_windows = [
        w.features for w in windows_inside(processed, span_start, span_end)
    ]
    profile = train_neutral(profile, neutral_windows)
    for ep in mental:
        ws = [w.features for w in windows_inside(processed, ep.start, ep.end)]
        profile = train_command(profile, ep.label, ws)
    return profile


def _per_episode_latency(script, predictions):
    """First completed hold per mental episode; None when never held."""
    samples = []
    detected = 0
    mental = [ep for ep in script.episodes if ep.kind == "mental"]
    for ep in mental:
        run = 0
        hit = None
        for start, label in predictions:
            if start + WINDOW_SECONDS <= ep.start or start >= ep.end:
                continue  # window does not touch the episode
            run = run + 1 if label == ep.label else 0
            if run >= HOLD_WINDOWS:
                hit = start + WINDOW_SECONDS - ep.start
                break
        if hit is not None:
            detected += 1
            samples.append(hit)
    return len(mental), detected, samples


def _nearest_rank(sorted_samples, q):
    idx = int(np.ceil(q * len(sorted_samples))) - 1
    return float(sorted_samples[max(0, idx)])


def evaluate(
    profile: Profile,
    script: ScenarioScript,
    noise: NoiseModel | None = None,
    command_signatures=None,
    artifact_signatures=None,
    config: PipelineConfig | None = None,
) -> EvalReport:
    """Score a trained profile over a labeled scenario, window by window."""
    processed = windows_of(
        script, noise, command_signatures, artifact_signatures, config
    )
    truths = ground_truth(script)
    count = min(len(processed), len(truths))

    trained = profile.trained_labels
    untrained = sorted(
        {t.com for t in truths} - trained - {NEUTRAL}
    )
    if untrained:
        log.warning(
            "scenario labels %s are not in the profile; their windows "
            "can only score as misses",
            untrained,
        )

    predictions = []
    for w in processed[:count]:
        det = classify(profile, w.features, window_start=w.start_time)
        predictions.append((w.start_time, det.label))

    axis = [NEUTRAL] + sorted(
        ({t.com for t in truths} | {p for _, p in predictions} | set(trained))
        - {NEUTRAL}
    )
    index = {label: i for i, label in enumerate(axis)}
    matrix = np.zeros((len(axis), len(axis)), dtype=int)
    for (_, pred), truth in zip(predictions, truths):
        matrix[index[truth.com], index[pred]] += 1

    total = int(matrix.sum())
    accuracy = float(np.trace(matrix)) / total if total else 0.0

    scores = []
    for i, label in enumerate(axis):
        row = int(matrix[i].sum())
        col = int(matrix[:, i].sum())
        diag = int(matrix[i, i])
        scores.append(
            (
                label,
                LabelScore(
                    precision=diag / col if col else 0.0,
                    recall=diag / row if row else 0.0,
                    support=row,
                ),
            )
        )

    n_eps, detected, samples = _per_episode_latency(script, predictions)
    if n_eps == 0:
        latency = None
    elif detected == 0:
        latency = LatencySummary(episodes=n_eps, detected=0)
    else:
        ordered = sorted(samples)
        latency = LatencySummary(
            episodes=n_eps,
            detected=detected,
            p50=_nearest_rank(ordered, 0.50),
            p90=_nearest_rank(ordered, 0.90),
            p95=_nearest_rank(ordered, 0.95),
            worst=ordered[-1],
        )

    return EvalReport(
        accuracy=accuracy,
        labels=tuple(axis),
        confusion=tuple(tuple(int(v) for v in row) for row in matrix),
        scores=tuple(scores),
        window_count=total,
        latency=latency,
    )


# --- serialization --------------------------------------------------------


def report_to_dict(report: EvalReport) -> dict:
    out = {
        "accuracy": report.accuracy,
        "labels": list(report.labels),
        "confusion": [list(row) for row in report.confusion],
        "window_count": report.window_count,
        "per_label": {
            label: {
                "precision": sc.precision,
                "recall": sc.recall,
                "support": sc.support,
            }
            for label, sc in report.scores
        },
    }
    if report.latency is None:
        out["latency"] = None
    else:
        lat = {"episodes": report.latency.episodes, "detected": report.latency.detected}
        if report.latency.detected:
            lat.update(
                p50=report.latency.p50,
                p90=report.latency.p90,
                p95=report.latency.p95,
                worst=report.latency.worst,
            )
        out["latency"] = lat
    return out


def report_json(report: EvalReport) -> str:
    """Canonical byte-stable rendering: sorted keys, fixed indent."""
    return json.dumps(report_to_dict(report), sort_keys=True, indent=2) + "\n"


def render_table(report: EvalReport) -> str:
    """Human-readable summary of the same numbers."""
    lines = []
    lines.append(
        f"overall accuracy {report.accuracy:.4f}"
        f"  ({int(round(report.accuracy * report.window_count))}"
        f"/{report.window_count} windows)"
    )
    lines.append("")
    width = max(len(l) for l in report.labels)
    lines.append(f"{'label':<{width}}  precision  recall  support")
    for label, sc in report.scores:
        lines.append(
            f"{label:<{width}}  {sc.precision:>9.3f}  {sc.recall:>6.3f}  {sc.support:>7d}"
        )
    lines.append("")
    lines.append("confusion (rows = truth, cols = predicted)")
    head = "  ".join(f"{l:>{width}}" for l in report.labels)
    lines.append(f"{'':<{width}}  {head}")
    for label, row in zip(report.labels, report.confusion):
        cells = "  ".join(f"{v:>{width}d}" for v in row)
        lines.append(f"{label:<{width}}  {cells}")
    if report.latency is not None:
        lines.append("")
        lat = report.latency
        if lat.detected:
            lines.append(
                f"hold latency: {lat.detected}/{lat.episodes} episodes detected, "
                f"p50 {lat.p50:.1f} s, p90 {lat.p90:.1f} s, "
                f"p95 {lat.p95:.1f} s, worst {lat.worst:.1f} s"
            )
        else:
            lines.append(f"hold latency: 0/{lat.episodes} episodes detected")
    return "\n".join(lines) + "\n"
