"""Session-level preprocessing and window feature assembly.

preprocess_session runs the per-modality cleaning chains once per session
(filters, re-referencing, denoising, gaze labelling, pupil cleaning, R-peak
detection); extract_window_features then slices 1-second windows out of the
prepared streams and builds the modality's feature vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError
from .features import (
    FeatureConfig,
    FeatureVector,
    Modality,
    RrSeries,
    blink_features,
    detect_r_peaks,
    ecg_stats,
    eeg_window_features,
    feature_names_for,
    gaze_features,
    rr_metrics,
)
from .fir import FirKernel, apply_filter_zero_phase, design_fir_bandpass
from .preprocess import (
    CleanPupilResult,
    GazeLabelTrace,
    average_rereference,
    baseline_correct,
    clean_pupil,
    dwt_denoise,
    interpolate_gaps_constant,
    ivt_classify,
    median_smooth_gaze,
)
from .signals import Environment, EventLog, SampledSignal, SessionBundle, slice_window, time_to_index


@dataclass(frozen=True)
class PreprocessConfig:
    """Cleaning-chain parameters; defaults are the pipeline defaults."""

    eeg_band: tuple[float, float] = (0.5, 50.0)
    eeg_transitions: tuple[float, float] = (0.1, 0.5)
    ecg_band: tuple[float, float] = (0.5, 40.0)
    ecg_transitions: tuple[float, float] = (0.1, 0.5)
    ecg_wavelet_levels: int = 4
    gaze_median_kernel: int = 3
    gaze_gap_fill_ms: float = 75.0
    ivt_threshold_dps: float = 30.0
    pupil_artifact_rate_mm_s: float = 1.0
    pupil_spline_gap_ms: float = 200.0


def eeg_kernel(config: PreprocessConfig, rate_hz: float) -> FirKernel:
    low, high = config.eeg_band
    t_low, t_high = config.eeg_transitions
    return design_fir_bandpass(low, high, t_low, t_high, rate_hz)


def ecg_kernel(config: PreprocessConfig, rate_hz: float) -> FirKernel:
    low, high = config.ecg_band
    t_low, t_high = config.ecg_transitions
    return design_fir_bandpass(low, high, t_low, t_high, rate_hz)


@dataclass(frozen=True)
class PreprocessedSession:
    """Cleaned streams plus the session-level derived traces."""

    bundle: SessionBundle
    eeg: SampledSignal
    ecg: SampledSignal
    gaze: SampledSignal | None
    gaze_trace: GazeLabelTrace | None
    pupil: CleanPupilResult | None
    rr: RrSeries

    @property
    def participant_id(self) -> str:
        return self.bundle.participant_id

    @property
    def environment(self) -> Environment:
        return self.bundle.environment

    @property
    def events(self) -> EventLog:
        return self.bundle.events

    @property
    def has_eye_tracking(self) -> bool:
        return self.gaze is not None

    def session_mean_rr_ms(self) -> float | None:
        if self.rr.intervals_ms.size < 2:
            return None
        return float(self.rr.intervals_ms.mean())

    def span(self) -> tuple[float, float]:
        return self.bundle.span()


def preprocess_session(
    bundle: SessionBundle, config: PreprocessConfig | None = None
) -> PreprocessedSession:
    """Run all per-modality cleaning chains for one session."""
    config = config or PreprocessConfig()

    eeg = apply_filter_zero_phase(bundle.eeg, eeg_kernel(config, bundle.eeg.rate_hz))
    eeg = average_rereference(eeg)
    eeg = baseline_correct(eeg)

    ecg = apply_filter_zero_phase(bundle.ecg, ecg_kernel(config, bundle.ecg.rate_hz))
    ecg = dwt_denoise(ecg, config.ecg_wavelet_levels)

    gaze = gaze_trace = pupil = None
    if bundle.gaze is not None and bundle.pupil is not None:
        gaze = median_smooth_gaze(bundle.gaze, config.gaze_median_kernel)
        gaze = interpolate_gaps_constant(gaze, config.gaze_gap_fill_ms)
        gaze_trace = ivt_classify(gaze, config.ivt_threshold_dps)
        pupil = clean_pupil(
            bundle.pupil,
            max_rate_mm_s=config.pupil_artifact_rate_mm_s,
            spline_max_gap_ms=config.pupil_spline_gap_ms,
        )

    return PreprocessedSession(
        bundle=bundle,
        eeg=eeg,
        ecg=ecg,
        gaze=gaze,
        gaze_trace=gaze_trace,
        pupil=pupil,
        rr=detect_r_peaks(ecg),
    )


def _et_features(
    prep: PreprocessedSession, t_start_s: float, config: FeatureConfig
) -> np.ndarray:
    if prep.gaze is None or prep.pupil is None or prep.gaze_trace is None:
        raise DegenerateInputError(
            f"session {prep.participant_id}/{prep.environment.value} has no eye tracking"
        )
    gaze_win = slice_window(prep.gaze, t_start_s, config.window_s)
    start = time_to_index(prep.gaze, t_start_s)
    trace_win = prep.gaze_trace.slice(start, start + gaze_win.n_samples)
    gf = gaze_features(
        gaze_win,
        trace_win,
        saccade_threshold_dps=config.saccade_threshold_dps,
        fixation_min_ms=config.fixation_min_ms,
    )

    pupil_signal = prep.pupil.signal
    p_start = time_to_index(pupil_signal, t_start_s)
    p_win = slice_window(pupil_signal, t_start_s, config.window_s)
    mask = prep.pupil.blink_mask()[p_start : p_start + p_win.n_samples]
    bf = blink_features(
        mask,
        rate_hz=pupil_signal.rate_hz,
        min_ms=config.blink_min_ms,
        max_ms=config.blink_max_ms,
    )

    diameters = p_win.samples[0]
    valid = np.isfinite(diameters)
    if not np.any(valid):
        raise DegenerateInputError("pupil window entirely missing")
    pupil_mean = float(diameters[valid].mean())
    pupil_std = float(diameters[valid].std())

    return np.array([*gf, *bf, pupil_mean, pupil_std])


def _ecg_features(
    prep: PreprocessedSession, t_start_s: float, config: FeatureConfig
) -> np.ndarray:
    window = slice_window(prep.ecg, t_start_s, config.window_s)
    stats = ecg_stats(window.samples[0])

    t_end = t_start_s + config.window_s
    if config.hrv_context_s is not None:
        intervals = prep.rr.intervals_within(t_end - config.hrv_context_s, t_end)
        session_mean = prep.session_mean_rr_ms()
        if session_mean is None:
            raise DegenerateInputError("too few R peaks in session for HRV normalisation")
        metrics = rr_metrics(intervals)  # raises when < 2 intervals in context
        rr_values = (metrics.mean_rr_ms / session_mean, metrics.sdnn_ms / session_mean, metrics.cv)
    else:
        intervals = prep.rr.intervals_within(t_start_s, t_end)
        metrics = rr_metrics(intervals)
        rr_values = (metrics.mean_rr_ms, metrics.sdnn_ms, metrics.cv)

    return np.array([*stats, *rr_values])


def extract_window_features(
    prep: PreprocessedSession,
    t_start_s: float,
    modality: Modality,
    config: FeatureConfig | None = None,
) -> FeatureVector:
    """Feature vector of the 1-second window starting at t_start_s.

    Raises DegenerateInputError when any constituent feature is undefined
    or non-finite; dataset assembly treats such windows as flagged and
    excludes them.
    """
    config = config or FeatureConfig()
    if modality is Modality.EEG:
        window = slice_window(prep.eeg, t_start_s, config.window_s)
        values = eeg_window_features(window.samples, window.rate_hz, config)
        names = feature_names_for(modality, prep.eeg.channel_labels, config)
    elif modality is Modality.ET:
        values = _et_features(prep, t_start_s, config)
        names = feature_names_for(modality, (), config)
    else:
        values = _ecg_features(prep, t_start_s, config)
        names = feature_names_for(modality, (), config)
    return FeatureVector(names=names, values=values, modality=modality)
