"""Window-level feature extraction for EEG, eye tracking and ECG.

EEG windows yield, per channel: five PSD band powers, four statistical
moments, three morphological measures, per-level wavelet energies, AR
coefficients, approximate entropy and the Hurst exponent. Eye tracking
yields saccade/fixation/blink counts plus dispersion and pupil statistics.
ECG yields distribution statistics and RR-interval variability.

Public functions operate on single channels (1-D arrays); the _batch_*
variants share the same math across a whole channel stack and back the
public wrappers, so the oracle tests exercise the production path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np

from .errors import DegenerateInputError, LengthError, ParameterError, ValidationError
from .fir import apply_filter_zero_phase, design_fir_bandpass
from .preprocess import GazeLabelTrace, _missing_runs
from .signals import SampledSignal


class Modality(Enum):
    EEG = "eeg"
    ET = "et"
    ECG = "ecg"


#: EEG band edges in Hz; powers integrate bins with centre frequency in [low, high).
EEG_BANDS: tuple[tuple[str, float, float], ...] = (
    ("delta", 1.0, 4.0),
    ("theta", 4.0, 8.0),
    ("alpha", 8.0, 12.0),
    ("beta", 12.0, 30.0),
    ("gamma", 30.0, 50.0),
)


@dataclass(frozen=True)
class FeatureVector:
    """Named, ordered, finite feature values for one window."""

    names: tuple[str, ...]
    values: np.ndarray
    modality: Modality

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", tuple(self.names))
        if len(self.names) != values.size:
            raise ValidationError(
                f"{len(self.names)} names for {values.size} values"
            )
        if not np.all(np.isfinite(values)):
            bad = [self.names[i] for i in np.flatnonzero(~np.isfinite(values))[:4]]
            raise DegenerateInputError(f"non-finite feature values: {bad}")


@dataclass(frozen=True)
class FeatureConfig:
    """Knobs for the extractors; the defaults match the pipeline's defaults."""

    window_s: float = 1.0
    wavelet_levels: int = 4
    ar_order: int = 2
    apen_m: int = 2
    apen_r_factor: float = 0.2
    hurst_chunk_sizes: tuple[int, ...] = (8, 16, 32, 64)
    ivt_threshold_dps: float = 30.0
    saccade_threshold_dps: float = 25.0
    fixation_min_ms: float = 60.0
    blink_min_ms: float = 70.0
    blink_max_ms: float = 450.0
    #: trailing HRV context window in seconds; None computes RR metrics on the
    #: 1-second window alone (usually too few beats).
    hrv_context_s: float | None = 8.0


# ---------------------------------------------------------------------------
# EEG spectral / statistical / morphological / wavelet / AR / non-linear
# ---------------------------------------------------------------------------


def _batch_psd(windows: np.ndarray, rate_hz: float) -> tuple[np.ndarray, np.ndarray]:
    """One-sided Hann periodogram per row: (freqs, psd [rows x bins])."""
    n = windows.shape[-1]
    taper = np.hanning(n)
    spectrum = np.fft.rfft(windows * taper, axis=-1)
    psd = np.abs(spectrum) ** 2 / (rate_hz * np.sum(taper**2))
    psd[..., 1:] *= 2.0
    if n % 2 == 0:
        psd[..., -1] /= 2.0  # Nyquist bin is not mirrored
    return np.fft.rfftfreq(n, d=1.0 / rate_hz), psd


def _batch_band_powers(windows: np.ndarray, rate_hz: float) -> np.ndarray:
    freqs, psd = _batch_psd(windows, rate_hz)
    df = rate_hz / windows.shape[-1]
    out = np.empty(windows.shape[:-1] + (len(EEG_BANDS),))
    for b, (_, low, high) in enumerate(EEG_BANDS):
        mask = (freqs >= low) & (freqs < high)
        out[..., b] = psd[..., mask].sum(axis=-1) * df
    return out


def psd_band_powers(window: np.ndarray, rate_hz: float) -> np.ndarray:
    """Power in the five canonical EEG bands of a single >= 1 s window."""
    window = np.asarray(window, dtype=np.float64)
    if window.size < rate_hz:
        raise LengthError(f"window of {window.size} samples is shorter than 1 s at {rate_hz} Hz")
    return _batch_band_powers(window[np.newaxis, :], rate_hz)[0]


def _batch_moments(windows: np.ndarray) -> np.ndarray:
    """(mean, population variance, skewness, excess kurtosis) per row.

    Constant rows report (mean, 0, 0, 0) rather than NaN so calibration
    windows survive extraction.
    """
    mean = windows.mean(axis=-1)
    centered = windows - mean[..., np.newaxis]
    m2 = np.mean(centered**2, axis=-1)
    m3 = np.mean(centered**3, axis=-1)
    m4 = np.mean(centered**4, axis=-1)
    constant = np.all(windows == windows[..., :1], axis=-1)
    safe_m2 = np.where(constant, 1.0, m2)
    skew = np.where(constant, 0.0, m3 / safe_m2**1.5)
    kurt = np.where(constant, 0.0, m4 / safe_m2**2 - 3.0)
    var = np.where(constant, 0.0, m2)
    return np.stack([mean, var, skew, kurt], axis=-1)


def stat_moments(window: np.ndarray) -> tuple[float, float, float, float]:
    """Population mean/variance/skewness/excess-kurtosis of one window."""
    window = np.asarray(window, dtype=np.float64)
    if window.size < 4:
        raise LengthError("need at least 4 samples for four moments")
    return tuple(_batch_moments(window[np.newaxis, :])[0])


def _batch_morphological(windows: np.ndarray) -> np.ndarray:
    diffs = np.diff(windows, axis=-1)
    curve_length = np.abs(diffs).sum(axis=-1)
    interior = windows[..., 1:-1]
    peaks = (interior > windows[..., :-2]) & (interior > windows[..., 2:])
    peak_count = peaks.sum(axis=-1).astype(np.float64)
    teager = interior**2 - windows[..., :-2] * windows[..., 2:]
    return np.stack([curve_length, peak_count, teager.mean(axis=-1)], axis=-1)


def morphological(window: np.ndarray) -> tuple[float, float, float]:
    """(curve length, strict peak count, mean Teager energy)."""
    window = np.asarray(window, dtype=np.float64)
    if window.size < 3:
        raise LengthError("need at least 3 samples for morphological features")
    return tuple(_batch_morphological(window[np.newaxis, :])[0])


def _batch_wavelet_energies(windows: np.ndarray, levels: int) -> np.ndarray:
    from .wavelets import wavedec

    coeffs = wavedec(windows, levels)
    parts = [np.sum(d**2, axis=-1) for d in coeffs.details]
    parts.append(np.sum(coeffs.approx**2, axis=-1))
    return np.stack(parts, axis=-1)


def wavelet_energies(window: np.ndarray, levels: int = 4) -> np.ndarray:
    """Squared-coefficient energy of detail levels 1..L plus the approximation."""
    window = np.asarray(window, dtype=np.float64)
    return _batch_wavelet_energies(window[np.newaxis, :], levels)[0]


def _batch_ar(windows: np.ndarray, order: int) -> np.ndarray:
    """Yule-Walker AR coefficients per row via Levinson-Durbin.

    Biased autocovariance estimates; coefficients are in prediction form
    x[n] ~ a1 x[n-1] + ... + ap x[n-p].
    """
    n = windows.shape[-1]
    centered = windows - windows.mean(axis=-1, keepdims=True)
    r = np.stack(
        [np.sum(centered[..., : n - k] * centered[..., k:], axis=-1) / n for k in range(order + 1)],
        axis=-1,
    )
    if np.any(r[..., 0] <= 0):
        raise DegenerateInputError("zero autocovariance at lag 0 (constant window)")
    phi = np.zeros(windows.shape[:-1] + (order,))
    err = r[..., 0].copy()
    for k in range(1, order + 1):
        acc = r[..., k].copy()
        for j in range(1, k):
            acc -= phi[..., j - 1] * r[..., k - j]
        if np.any(err <= 0):
            raise DegenerateInputError("Levinson recursion collapsed (degenerate window)")
        kappa = acc / err
        new_phi = phi.copy()
        new_phi[..., k - 1] = kappa
        for j in range(1, k):
            new_phi[..., j - 1] = phi[..., j - 1] - kappa * phi[..., k - j - 1]
        phi = new_phi
        err = err * (1.0 - kappa**2)
    return phi


def ar_coefficients(window: np.ndarray, order: int = 2) -> tuple[float, ...]:
    """AR(p) coefficients of one window; constant input is a degenerate error."""
    window = np.asarray(window, dtype=np.float64)
    if window.size < 16:
        raise LengthError("need at least 16 samples for AR estimation")
    return tuple(_batch_ar(window[np.newaxis, :], order)[0])


def _batch_approximate_entropy(windows: np.ndarray, m: int, r_factor: float) -> np.ndarray:
    """ApEn(m, r_factor * std) per row, self-matches included."""
    n = windows.shape[-1]
    r = r_factor * windows.std(axis=-1)  # population std
    dist = np.abs(windows[:, :, np.newaxis] - windows[:, np.newaxis, :])

    def phi(embed: int) -> np.ndarray:
        count = n - embed + 1
        d = dist[:, :count, :count].copy()
        for k in range(1, embed):
            np.maximum(d, dist[:, k : k + count, k : k + count], out=d)
        matches = (d <= r[:, np.newaxis, np.newaxis]).sum(axis=-1)
        return np.mean(np.log(matches / count), axis=-1)

    return phi(m) - phi(m + 1)


def approximate_entropy(window: np.ndarray, m: int = 2, r_factor: float = 0.2) -> float:
    """Approximate entropy; 0 for constant windows by construction."""
    window = np.asarray(window, dtype=np.float64)
    if window.size < 64:
        raise LengthError("need at least 64 samples for approximate entropy")
    return float(_batch_approximate_entropy(window[np.newaxis, :], m, r_factor)[0])


HURST_CLAMP = (0.0, 1.5)


def _batch_hurst(windows: np.ndarray, chunk_sizes: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
    """Rescaled-range Hurst estimate per row; returns (H, clamped_flags)."""
    n = windows.shape[-1]
    rows = windows.shape[0]
    log_rs = np.full((rows, len(chunk_sizes)), np.nan)
    for s_idx, size in enumerate(chunk_sizes):
        n_chunks = n // size
        chunks = windows[:, : n_chunks * size].reshape(rows, n_chunks, size)
        dev = chunks - chunks.mean(axis=-1, keepdims=True)
        z = np.cumsum(dev, axis=-1)
        spread = z.max(axis=-1) - z.min(axis=-1)
        scale = chunks.std(axis=-1)
        valid = scale > 0
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(valid, spread / np.where(valid, scale, 1.0), np.nan)
        counts = valid.sum(axis=-1)
        has = counts > 0
        mean_rs = np.where(has, np.nansum(ratio, axis=-1) / np.maximum(counts, 1), np.nan)
        with np.errstate(invalid="ignore", divide="ignore"):
            log_rs[:, s_idx] = np.log(mean_rs)
    usable = np.isfinite(log_rs)
    if np.any(usable.sum(axis=-1) < 2):
        raise DegenerateInputError("all chunks zero-variance; Hurst exponent undefined")
    log_sizes = np.log(np.asarray(chunk_sizes, dtype=np.float64))
    slopes = np.empty(rows)
    for i in range(rows):
        ls = log_sizes[usable[i]]
        lr = log_rs[i][usable[i]]
        ls_c = ls - ls.mean()
        slopes[i] = np.dot(ls_c, lr - lr.mean()) / np.dot(ls_c, ls_c)
    clamped = (slopes < HURST_CLAMP[0]) | (slopes > HURST_CLAMP[1])
    return np.clip(slopes, *HURST_CLAMP), clamped


def hurst_exponent(
    window: np.ndarray, chunk_sizes: tuple[int, ...] = (8, 16, 32, 64)
) -> tuple[float, bool]:
    """Rescaled-range Hurst exponent, clamped to [0, 1.5] with a clamp flag."""
    window = np.asarray(window, dtype=np.float64)
    if window.size < 128:
        raise LengthError("need at least 128 samples for the Hurst exponent")
    h, clamped = _batch_hurst(window[np.newaxis, :], chunk_sizes)
    return float(h[0]), bool(clamped[0])


# ---------------------------------------------------------------------------
# Eye tracking
# ---------------------------------------------------------------------------


class GazeFeatures(NamedTuple):
    saccade_count: float
    saccade_peak_velocity_mean_dps: float
    fixation_count: float
    fixation_duration_mean_ms: float
    fixation_time_total_ms: float
    gaze_dispersion_deg: float


def _true_runs(mask: np.ndarray) -> list[tuple[int, int]]:
    return _missing_runs(mask)


def gaze_features(
    gaze_window: SampledSignal,
    trace: GazeLabelTrace,
    saccade_threshold_dps: float = 25.0,
    fixation_min_ms: float = 60.0,
) -> GazeFeatures:
    """Saccade/fixation run statistics plus gaze dispersion for one window.

    Saccades are maximal runs with velocity strictly above the threshold;
    fixations are maximal at-or-below-threshold runs lasting at least
    fixation_min_ms. Samples with undefined velocity break runs.
    """
    v = trace.velocity_dps
    rate = gaze_window.rate_hz
    x, y = gaze_window.samples[0], gaze_window.samples[1]
    valid_pos = np.isfinite(x) & np.isfinite(y)
    if not np.any(valid_pos):
        raise DegenerateInputError("gaze window has no valid samples")

    defined = np.isfinite(v)
    saccade_runs = _true_runs(defined & (v > saccade_threshold_dps))
    peak_velocities = [float(np.max(v[s : s + ln])) for s, ln in saccade_runs]

    fixation_runs = [
        (s, ln)
        for s, ln in _true_runs(defined & (v <= saccade_threshold_dps))
        if ln / rate * 1000.0 >= fixation_min_ms
    ]
    fix_durations = np.array([ln / rate * 1000.0 for _, ln in fixation_runs])

    cx, cy = x[valid_pos].mean(), y[valid_pos].mean()
    dispersion = math.sqrt(float(np.mean((x[valid_pos] - cx) ** 2 + (y[valid_pos] - cy) ** 2)))

    return GazeFeatures(
        saccade_count=float(len(saccade_runs)),
        saccade_peak_velocity_mean_dps=float(np.mean(peak_velocities)) if peak_velocities else 0.0,
        fixation_count=float(len(fixation_runs)),
        fixation_duration_mean_ms=float(fix_durations.mean()) if fix_durations.size else 0.0,
        fixation_time_total_ms=float(fix_durations.sum()) if fix_durations.size else 0.0,
        gaze_dispersion_deg=dispersion,
    )


class BlinkFeatures(NamedTuple):
    blink_count: float
    blink_duration_mean_ms: float


def blink_features(
    pupil_or_mask: SampledSignal | np.ndarray,
    rate_hz: float | None = None,
    min_ms: float = 70.0,
    max_ms: float = 450.0,
) -> BlinkFeatures:
    """Count missing runs whose duration falls within [min_ms, max_ms].

    Accepts either a 1-channel pupil signal (NaN marks missing) or a boolean
    blink-candidate mask plus its sample rate.
    """
    if isinstance(pupil_or_mask, SampledSignal):
        mask = np.isnan(pupil_or_mask.samples[0])
        rate = pupil_or_mask.rate_hz
    else:
        if rate_hz is None:
            raise ParameterError("rate_hz is required when passing a raw mask")
        mask = np.asarray(pupil_or_mask, dtype=bool)
        rate = rate_hz
    durations = [
        ln / rate * 1000.0
        for _, ln in _missing_runs(mask)
        if min_ms <= ln / rate * 1000.0 <= max_ms
    ]
    return BlinkFeatures(
        blink_count=float(len(durations)),
        blink_duration_mean_ms=float(np.mean(durations)) if durations else 0.0,
    )


# ---------------------------------------------------------------------------
# ECG
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RrSeries:
    """R-peak times (session clock, s) and the intervals between them (ms)."""

    peak_times_s: np.ndarray
    intervals_ms: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.peak_times_s, dtype=np.float64)
        intervals = np.asarray(self.intervals_ms, dtype=np.float64)
        object.__setattr__(self, "peak_times_s", times)
        object.__setattr__(self, "intervals_ms", intervals)
        if intervals.size != max(times.size - 1, 0):
            raise ValidationError("intervals must be pairwise diffs of peak times")
        if np.any(intervals <= 0):
            raise ValidationError("RR intervals must be strictly positive")

    @classmethod
    def from_times(cls, times_s: np.ndarray) -> "RrSeries":
        times_s = np.asarray(times_s, dtype=np.float64)
        return cls(peak_times_s=times_s, intervals_ms=np.diff(times_s) * 1000.0)

    @property
    def n_peaks(self) -> int:
        return self.peak_times_s.size

    def intervals_within(self, t_start_s: float, t_end_s: float) -> np.ndarray:
        """Intervals whose two bounding peaks both fall inside [t_start, t_end)."""
        t = self.peak_times_s
        inside = (t[:-1] >= t_start_s) & (t[1:] < t_end_s)
        return self.intervals_ms[inside]


def detect_r_peaks(ecg: SampledSignal) -> RrSeries:
    """Derivative-square-integrate R-peak detector with an adaptive threshold.

    The signal is band-limited to 5-15 Hz, differentiated, squared and
    integrated over a 150 ms moving window. Integrated local maxima above
    half the running mean of the last eight accepted peak heights become
    detections (250 ms refractory); each detection is refined to the local
    maximum of the input signal within +-50 ms. No detectable peaks yield
    an empty series, not an error.
    """
    x = ecg.samples[0]
    rate = ecg.rate_hz
    n = x.size

    filtered = x
    if n > 12:
        transition = max(2.5, 3.3 * rate / (n - 2) * 1.01)
        if 15.0 + transition < rate / 2.0:
            kernel = design_fir_bandpass(5.0, 15.0, transition, transition, rate)
            if len(kernel) < n:
                filtered = apply_filter_zero_phase(
                    ecg.with_samples(x[np.newaxis, :]), kernel
                ).samples[0]

    derivative = np.diff(filtered) * rate
    squared = derivative**2
    window = max(1, round(0.15 * rate))
    integrated = np.convolve(squared, np.ones(window) / window, mode="same")

    interior = integrated[1:-1]
    is_peak = (interior > integrated[:-2]) & (interior > integrated[2:])
    candidates = np.flatnonzero(is_peak) + 1
    if candidates.size == 0:
        return RrSeries.from_times(np.empty(0))

    bootstrap = integrated[: min(integrated.size, round(2 * rate))].max()
    history: list[float] = [float(bootstrap)]
    refractory = round(0.25 * rate)
    half_search = round(0.05 * rate)
    accepted: list[int] = []
    last_detection = -refractory
    for idx in candidates:
        threshold = 0.5 * float(np.mean(history))
        if integrated[idx] < threshold or idx - last_detection < refractory:
            continue
        last_detection = int(idx)
        history.append(float(integrated[idx]))
        if len(history) > 8:
            history.pop(0)
        lo = max(0, idx - half_search)
        hi = min(n, idx + half_search + 1)
        accepted.append(lo + int(np.argmax(x[lo:hi])))

    refined = sorted(set(accepted))
    times = ecg.start_epoch_s + np.asarray(refined, dtype=np.float64) / rate
    return RrSeries.from_times(times)


class RrMetrics(NamedTuple):
    mean_rr_ms: float
    sdnn_ms: float
    cv: float


def rr_metrics(rr: RrSeries | np.ndarray) -> RrMetrics:
    """Mean RR, SDNN (n-1 denominator) and coefficient of variation."""
    intervals = rr.intervals_ms if isinstance(rr, RrSeries) else np.asarray(rr, dtype=np.float64)
    if intervals.size < 2:
        raise DegenerateInputError(f"need >= 2 RR intervals, got {intervals.size}")
    mean = float(intervals.mean())
    sdnn = float(intervals.std(ddof=1))
    return RrMetrics(mean_rr_ms=mean, sdnn_ms=sdnn, cv=sdnn / mean)


def ecg_stats(window: np.ndarray) -> tuple[float, float, float, float]:
    """(mean, population std, skewness, excess kurtosis) of an ECG window."""
    mean, var, skew, kurt = stat_moments(window)
    return mean, math.sqrt(var), skew, kurt


# ---------------------------------------------------------------------------
# Feature naming
# ---------------------------------------------------------------------------


def eeg_channel_feature_names(config: FeatureConfig) -> tuple[str, ...]:
    names = [f"bp_{band}" for band, _, _ in EEG_BANDS]
    names += ["mean", "variance", "skewness", "kurtosis"]
    names += ["curve_length", "peak_count", "nonlinear_energy"]
    names += [f"dwt_e{lv}" for lv in range(1, config.wavelet_levels + 1)]
    names += [f"dwt_a{config.wavelet_levels}"]
    names += [f"ar_{k}" for k in range(1, config.ar_order + 1)]
    names += ["apen", "hurst"]
    return tuple(names)


def eeg_feature_names(channel_labels: tuple[str, ...], config: FeatureConfig) -> tuple[str, ...]:
    per_channel = eeg_channel_feature_names(config)
    return tuple(f"{ch}_{name}" for ch in channel_labels for name in per_channel)


def et_feature_names(config: FeatureConfig) -> tuple[str, ...]:
    return (
        "saccade_count",
        "saccade_peak_velocity_mean_dps",
        "fixation_count",
        "fixation_duration_mean_ms",
        "fixation_time_total_ms",
        "gaze_dispersion_deg",
        "blink_count",
        "blink_duration_mean_ms",
        "pupil_mean_mm",
        "pupil_std_mm",
    )


def ecg_feature_names(config: FeatureConfig) -> tuple[str, ...]:
    suffix = "_norm" if config.hrv_context_s is not None else "_ms"
    return (
        "ecg_mean",
        "ecg_std",
        "ecg_skewness",
        "ecg_kurtosis",
        f"rr_mean{suffix}",
        f"rr_sdnn{suffix}",
        "rr_cv",
    )


def feature_names_for(
    modality: Modality, channel_labels: tuple[str, ...], config: FeatureConfig
) -> tuple[str, ...]:
    if modality is Modality.EEG:
        return eeg_feature_names(channel_labels, config)
    if modality is Modality.ET:
        return et_feature_names(config)
    return ecg_feature_names(config)


def eeg_window_features(window: np.ndarray, rate_hz: float, config: FeatureConfig) -> np.ndarray:
    """All per-channel EEG features of one [channels x samples] window,
    concatenated in channel order."""
    bands = _batch_band_powers(window, rate_hz)
    moments = _batch_moments(window)
    morph = _batch_morphological(window)
    dwt = _batch_wavelet_energies(window, config.wavelet_levels)
    ar = _batch_ar(window, config.ar_order)
    apen = _batch_approximate_entropy(window, config.apen_m, config.apen_r_factor)
    hurst, _ = _batch_hurst(window, config.hurst_chunk_sizes)
    per_channel = np.column_stack(
        [bands, moments, morph, dwt, ar, apen[:, np.newaxis], hurst[:, np.newaxis]]
    )
    return per_channel.ravel()
