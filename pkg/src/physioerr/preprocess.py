"""Per-modality signal cleaning.

EEG: zero-phase band-pass (0.5-50 Hz), average re-reference, whole-signal
baseline correction. ECG: zero-phase band-pass (0.5-40 Hz) plus wavelet
soft-threshold denoising. Gaze: running-median smoothing, constant fill of
short gaps, three-point velocity and I-VT labelling. Pupil: two-stage
median smoothing, rate-of-change artifact rejection, natural cubic spline
fill of short gaps; longer gaps stay missing and are reported as blink
candidates.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DegenerateInputError, LengthError, ParameterError
from .signals import SampledSignal
from .wavelets import WaveletCoeffs, soft_threshold, universal_threshold, wavedec, waverec


def average_rereference(eeg: SampledSignal) -> SampledSignal:
    """Subtract the instantaneous across-channel mean from every channel."""
    if eeg.n_channels < 2:
        raise ParameterError("average re-referencing needs at least 2 channels")
    return eeg.with_samples(eeg.samples - eeg.samples.mean(axis=0, keepdims=True))


def baseline_correct(signal: SampledSignal) -> SampledSignal:
    """Subtract each channel's whole-signal mean."""
    if signal.n_samples == 0:
        raise ParameterError("cannot baseline-correct an empty signal")
    return signal.with_samples(signal.samples - signal.samples.mean(axis=1, keepdims=True))


def dwt_denoise(
    signal: SampledSignal, wavelet_levels: int = 4, threshold: float | None = None
) -> SampledSignal:
    """Multi-level db4 decomposition, soft-threshold details, reconstruct.

    The default threshold is the universal rule sigma*sqrt(2 ln N) with the
    MAD estimate of sigma from the finest detail band; pass threshold=0.0
    to get a perfect reconstruction.
    """
    n = signal.n_samples
    if n < 2**wavelet_levels:
        raise LengthError(f"signal length {n} too short for {wavelet_levels} DWT levels")
    out = np.empty_like(signal.samples)
    for c in range(signal.n_channels):
        coeffs = wavedec(signal.samples[c], wavelet_levels)
        thr = universal_threshold(coeffs.details[0], n) if threshold is None else threshold
        shrunk = WaveletCoeffs(
            details=tuple(soft_threshold(d, thr) for d in coeffs.details),
            approx=coeffs.approx,
            input_lengths=coeffs.input_lengths,
        )
        out[c] = waverec(shrunk)
    return signal.with_samples(out)


class GazeLabel(IntEnum):
    FIXATION = 0
    SACCADE = 1
    GAP = 2


@dataclass(frozen=True)
class GazeLabelTrace:
    """Per-sample I-VT labels plus the velocity trace they were cut from."""

    labels: np.ndarray  # GazeLabel values, one per gaze sample
    velocity_dps: np.ndarray  # deg/s, NaN where undefined

    def __post_init__(self):
        if self.labels.shape != self.velocity_dps.shape:
            raise ParameterError("labels and velocity trace must have equal length")

    def slice(self, start: int, stop: int) -> "GazeLabelTrace":
        return GazeLabelTrace(self.labels[start:stop], self.velocity_dps[start:stop])


def three_point_velocity(gaze: SampledSignal, window_ms: float = 20.0) -> np.ndarray:
    """Angular speed from the samples +-half a window away.

    v[n] = |(x, y)[n+k] - (x, y)[n-k]| / (2k / rate) with k = 1 at 100 Hz /
    20 ms. Undefined (NaN) at the ends and wherever a needed neighbour is
    missing.
    """
    x, y = gaze.samples[0], gaze.samples[1]
    rate = gaze.rate_hz
    k = max(1, round(window_ms / 1000.0 * rate / 2.0))
    n = gaze.n_samples
    v = np.full(n, np.nan)
    if n <= 2 * k:
        return v
    dx = x[2 * k :] - x[: n - 2 * k]
    dy = y[2 * k :] - y[: n - 2 * k]
    v[k : n - k] = np.hypot(dx, dy) / (2.0 * k / rate)
    return v


def ivt_classify(gaze: SampledSignal, velocity_threshold_dps: float = 30.0) -> GazeLabelTrace:
    """I-VT labelling: saccade at or above threshold, fixation below, gap undefined."""
    v = three_point_velocity(gaze)
    labels = np.full(gaze.n_samples, GazeLabel.GAP, dtype=np.int8)
    defined = np.isfinite(v)
    labels[defined & (v >= velocity_threshold_dps)] = GazeLabel.SACCADE
    labels[defined & (v < velocity_threshold_dps)] = GazeLabel.FIXATION
    return GazeLabelTrace(labels=labels, velocity_dps=v)


def _running_median(values: np.ndarray, kernel: int) -> np.ndarray:
    """NaN-aware running median; the first/last half-kernel samples pass through."""
    half = kernel // 2
    n = values.size
    out = values.copy()
    if n < kernel:
        return out
    windows = np.lib.stride_tricks.sliding_window_view(values, kernel)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN windows stay NaN
        out[half : n - half] = np.nanmedian(windows, axis=1)
    return out


def median_smooth_gaze(gaze: SampledSignal, kernel: int = 3) -> SampledSignal:
    """Per-channel running median; missing samples are excluded from each window."""
    if kernel % 2 == 0:
        raise ParameterError(f"median kernel must be odd, got {kernel}")
    out = np.vstack([_running_median(row, kernel) for row in gaze.samples])
    return gaze.with_samples(out)


def _missing_runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal True runs as (start, length)."""
    padded = np.diff(np.concatenate(([False], mask, [False])).astype(np.int8))
    starts = np.flatnonzero(padded == 1)
    ends = np.flatnonzero(padded == -1)
    return [(int(s), int(e - s)) for s, e in zip(starts, ends)]


def interpolate_gaps_constant(gaze: SampledSignal, max_gap_ms: float = 75.0) -> SampledSignal:
    """Hold the last valid value across gaps strictly shorter than max_gap_ms.

    Gaps at or beyond the limit, and gaps with no sample before them, are
    left missing.
    """
    rate = gaze.rate_hz
    out = gaze.samples.copy()
    for row in out:
        for start, length in _missing_runs(np.isnan(row)):
            if start == 0:
                continue
            if length / rate * 1000.0 < max_gap_ms:
                row[start : start + length] = row[start - 1]
    return gaze.with_samples(out)


@dataclass(frozen=True)
class CleanPupilResult:
    """Cleaned pupil trace plus the missing runs seen before spline filling.

    blink_runs are (start_index, length) pairs on the pupil sample grid;
    downstream blink detection gates them by duration, so short dropouts
    remain observable even after the signal itself has been spline-filled.
    """

    signal: SampledSignal
    blink_runs: tuple[tuple[int, int], ...]

    def blink_mask(self) -> np.ndarray:
        mask = np.zeros(self.signal.n_samples, dtype=bool)
        for start, length in self.blink_runs:
            mask[start : start + length] = True
        return mask


def clean_pupil(
    pupil: SampledSignal,
    max_rate_mm_s: float = 1.0,
    spline_max_gap_ms: float = 200.0,
) -> CleanPupilResult:
    """Four-stage pupil cleaning.

    1. running median, 3 samples; 2. mark rate-of-change artifacts
    (|d diameter|/dt > max_rate_mm_s) as missing; 3. running median,
    5 samples; 4. natural cubic spline fill of gaps strictly shorter than
    spline_max_gap_ms. Longer gaps stay missing; all post-stage-3 missing
    runs are recorded as blink candidates.
    """
    rate = pupil.rate_hz
    x = _running_median(pupil.samples[0], 3)

    diffs = np.abs(np.diff(x)) * rate
    artifacts = np.concatenate(([False], diffs > max_rate_mm_s))
    artifacts &= np.isfinite(x)  # only defined samples can be marked
    x[artifacts] = np.nan

    x = _running_median(x, 5)

    missing = np.isnan(x)
    runs = _missing_runs(missing)
    valid_idx = np.flatnonzero(~missing)
    if valid_idx.size >= 4:
        spline = CubicSpline(valid_idx, x[valid_idx], bc_type="natural")
        for start, length in runs:
            if length / rate * 1000.0 >= spline_max_gap_ms:
                continue
            if start == 0 or start + length == x.size:
                continue  # no anchor on one side
            fill = np.arange(start, start + length)
            x[fill] = spline(fill)
    return CleanPupilResult(
        signal=pupil.with_samples(x[np.newaxis, :]),
        blink_runs=tuple(runs),
    )
