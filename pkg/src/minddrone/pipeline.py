"""Frame stream to per-window detections: filter, segment, measure.

One causal filter state runs over the whole stream; windows are cut from
the filtered stream on the 2 s / 1 s grid, and each completed window
yields band powers, a feature vector, and the raw filtered slice for the
facial rules.  The streaming class and the offline helper share this
code path, so offline training/evaluation and the live service see
byte-identical features for the same frames.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import (
    EegFrame,
    EegWindow,
    HOP_SECONDS,
    N_CHANNELS,
    PASSBAND_HZ,
    WINDOW_SECONDS,
    band_power,
    design_bandpass,
    features,
    frames_to_array,
)


@dataclass(frozen=True)
class PipelineConfig:
    sample_rate: int = 128
    filter_low: float = PASSBAND_HZ[0]
    filter_high: float = PASSBAND_HZ[1]
    filter_order: int = 4
    window_s: float = WINDOW_SECONDS
    hop_s: float = HOP_SECONDS
    #: every Nth filtered frame is exposed on the eeg telemetry stream
    eeg_decimation: int = 4


@dataclass(frozen=True)
class ProcessedWindow:
    """Everything downstream consumers need about one analysis window."""

    index: int
    start_time: float
    window: EegWindow  # filtered samples
    powers: np.ndarray  # (5, 5) band powers
    features: np.ndarray  # 25-vector

    @property
    def end_time(self) -> float:
        return self.start_time + self.window.duration


class StreamPipeline:
    """Causal, incremental version of process_frames.

    push() accepts any number of frames and returns the windows they
    completed; filter state persists across calls so block boundaries do
    not exist as far as the signal is concerned.
    """

    def __init__(self, config: PipelineConfig | None = None) -> None:
        self.config = config or PipelineConfig()
        fs = self.config.sample_rate
        from scipy.signal import sosfilt

        self._sosfilt = sosfilt
        self._sos = design_bandpass(
            self.config.filter_low,
            self.config.filter_high,
            fs,
            order=self.config.filter_order,
        ).as_sos()
        self._zi = np.zeros((self._sos.shape[0], N_CHANNELS, 2))
        self._win_n = int(round(self.config.window_s * fs))
        self._hop_n = int(round(self.config.hop_s * fs))
        self._buffer = np.empty((N_CHANNELS, 0))
        self._buffer_start_sample = 0
        self._next_window = 0
        self._eeg_countdown = 0

    @property
    def sample_rate(self) -> int:
        return self.config.sample_rate

    def push(self, block: np.ndarray, emit_eeg: bool = False):
        """Filter a (5, n) block; return (windows, eeg_frames).

        eeg_frames is the decimated filtered telemetry (time, 5 values)
        and is only materialized when emit_eeg is set.
        """
        if block.ndim != 2 or block.shape[0] != N_CHANNELS:
            raise ValueError(f"expected (5, n) block, got {block.shape}")
        fs = self.config.sample_rate
        eeg_frames: list[tuple[float, tuple[float, ...]]] = []
        if block.shape[1]:
            filtered, self._zi = self._sosfilt(self._sos, block, zi=self._zi, axis=1)
            first_sample = self._buffer_start_sample + self._buffer.shape[1]
            if emit_eeg:
                step = self.config.eeg_decimation
                # countdown tracks how far into the decimation cycle we are
                offset = self._eeg_countdown
                for i in range(block.shape[1]):
                    if offset == 0:
                        t = (first_sample + i) / fs
                        eeg_frames.append(
                            (t, tuple(float(v) for v in filtered[:, i]))
                        )
                        offset = step
                    offset -= 1
                self._eeg_countdown = offset
            self._buffer = np.concatenate([self._buffer, filtered], axis=1)

        windows: list[ProcessedWindow] = []
        while True:
            window_start_sample = self._next_window * self._hop_n
            have = self._buffer_start_sample + self._buffer.shape[1]
            if window_start_sample + self._win_n > have:
                break
            lo = window_start_sample - self._buffer_start_sample
            samples = self._buffer[:, lo : lo + self._win_n].copy()
            win = EegWindow(
                sample_rate=fs,
                samples=samples,
                start_time=window_start_sample / fs,
            )
            powers = band_power(win)
            windows.append(
                ProcessedWindow(
                    index=self._next_window,
                    start_time=win.start_time,
                    window=win,
                    powers=powers,
                    features=features(powers),
                )
            )
            self._next_window += 1
            # drop samples no window can need any more
            keep_from = self._next_window * self._hop_n
            drop = keep_from - self._buffer_start_sample
            if drop > 0:
                self._buffer = self._buffer[:, drop:]
                self._buffer_start_sample = keep_from
        return windows, eeg_frames


def process_frames(
    frames: list[EegFrame], config: PipelineConfig | None = None
) -> list[ProcessedWindow]:
    """Offline pipeline over a complete frame sequence."""
    config = config or PipelineConfig()
    pipe = StreamPipeline(config)
    windows, _ = pipe.push(frames_to_array(frames))
    return windows


def windows_inside(
    processed: list[ProcessedWindow], start_s: float, end_s: float
) -> list[ProcessedWindow]:
    """Windows lying entirely within [start_s, end_s); used for training."""
    return [
        w
        for w in processed
        if w.start_time >= start_s - 1e-9 and w.end_time <= end_s + 1e-9
    ]
