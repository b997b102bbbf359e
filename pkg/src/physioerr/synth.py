"""Synthetic flight-session generator.

Produces sessions whose task-event streams follow the difficulty/environment
error-rate profile and whose physiological streams carry configurable
post-error signatures: an ErrP-like negativity/positivity pair in the EEG,
a brief RR shortening in the ECG, a reactive saccade in the gaze stream and
a transient pupil dilation. Setting every signature amplitude to zero gives
streams in which error and non-error windows are statistically identical.

Everything is deterministic given the config seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ValidationError
from .seeding import derive_seed, rng_for
from .signals import (
    Difficulty,
    Environment,
    Event,
    EventKind,
    EventLog,
    SampledSignal,
    SessionBundle,
    Task,
)

EEG_RATE_HZ = 256.0
ECG_RATE_HZ = 130.0
GAZE_RATE_HZ = 100.0

EEG_CHANNELS: tuple[str, ...] = (
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "FC5", "FC1", "FC2", "FC6",
    "T7", "C3", "Cz", "C4", "T8", "CP5", "CP1", "CP2", "CP6", "P7", "P3",
    "Pz", "P4",
)

# Focal fronto-central weighting for the error-potential topography; a low
# across-channel mean keeps average re-referencing from cancelling it.
_ERRP_WEIGHTS = {
    "Fp1": 0.25, "Fp2": 0.25, "F7": 0.15, "F3": 0.5, "Fz": 1.0, "F4": 0.5,
    "F8": 0.15, "FC5": 0.45, "FC1": 0.9, "FC2": 0.9, "FC6": 0.45, "T7": 0.1,
    "C3": 0.5, "Cz": 1.0, "C4": 0.5, "T8": 0.1, "CP5": 0.15, "CP1": 0.4,
    "CP2": 0.4, "CP6": 0.15, "P7": 0.05, "P3": 0.15, "Pz": 0.2, "P4": 0.15,
}

#: Expected error counts per 180-second block, by difficulty then environment.
ERROR_RATE_PROFILE: dict[Difficulty, dict[Environment, float]] = {
    Difficulty.LOW: {
        Environment.BASELINE: 5.0,
        Environment.STRAIGHT_LEVEL: 5.0,
        Environment.TWO_G: 5.0,
    },
    Difficulty.MEDIUM: {
        Environment.BASELINE: 8.0,
        Environment.STRAIGHT_LEVEL: 8.0,
        Environment.TWO_G: 13.0,
    },
    Difficulty.HIGH: {
        Environment.BASELINE: 29.0,
        Environment.STRAIGHT_LEVEL: 37.0,
        Environment.TWO_G: 40.0,
    },
}

PROFILE_BLOCK_DURATION_S = 180.0

#: Non-error task interactions are generated at this multiple of the error rate.
NON_ERROR_RATE_FACTOR = 3.0

DEFAULT_MOTION_GAINS: dict[Environment, float] = {
    Environment.BASELINE: 0.0,
    Environment.STRAIGHT_LEVEL: 1.0,
    Environment.TWO_G: 2.0,
}


@dataclass(frozen=True)
class SynthConfig:
    """Generation parameters for one difficulty block."""

    participant_id: str
    environment: Environment
    difficulty: Difficulty
    seed: int
    block_duration_s: float = 180.0
    errp_amplitude_uv: float = 25.0
    noise_sigma_uv: float = 10.0
    motion_artifact_gain: float = 0.0
    motion_sigma_uv: float = 1.0
    pupil_dilation_mm: float = 0.12
    blink_rate_hz: float = 0.2
    mean_rr_ms: float = 850.0
    rr_jitter_ms: float = 35.0
    rr_post_error_drop_ms: float = 8.0
    gaze_saccade_on_error_deg: float = 6.0

    def __post_init__(self):
        if not self.block_duration_s > 0:
            raise ValidationError(f"block_duration_s must be positive, got {self.block_duration_s}")
        if not self.noise_sigma_uv > 0:
            raise ValidationError("noise_sigma_uv must be positive")
        if not self.mean_rr_ms > 0:
            raise ValidationError("mean_rr_ms must be positive")
        for name in (
            "errp_amplitude_uv",
            "motion_artifact_gain",
            "motion_sigma_uv",
            "pupil_dilation_mm",
            "blink_rate_hz",
            "rr_jitter_ms",
            "rr_post_error_drop_ms",
            "gaze_saccade_on_error_deg",
        ):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValidationError(f"{name} must be finite and >= 0, got {value}")

    def zero_signal(self) -> "SynthConfig":
        """Same noise floor, no post-error signatures of any kind."""
        return replace(
            self,
            errp_amplitude_uv=0.0,
            rr_post_error_drop_ms=0.0,
            pupil_dilation_mm=0.0,
            gaze_saccade_on_error_deg=0.0,
        )


@dataclass(frozen=True)
class ErrpTemplate:
    """Two Gaussian bumps: an early negativity and a later positivity."""

    ne_amplitude: float
    pe_amplitude: float
    channel_weights: np.ndarray
    ne_latency_s: float = 0.08
    ne_width_s: float = 0.04
    pe_latency_s: float = 0.30
    pe_width_s: float = 0.10

    def __post_init__(self):
        object.__setattr__(
            self, "channel_weights", np.asarray(self.channel_weights, dtype=np.float64)
        )
        for latency in (self.ne_latency_s, self.pe_latency_s):
            if not 0.0 < latency < 1.0:
                raise ValidationError(f"latency {latency} must lie in (0, 1) s")
        if self.ne_width_s <= 0 or self.pe_width_s <= 0:
            raise ValidationError("bump widths must be positive")
        if np.any((self.channel_weights < 0) | (self.channel_weights > 1)):
            raise ValidationError("channel weights must lie in [0, 1]")

    @classmethod
    def default(
        cls, channel_labels: tuple[str, ...], amplitude_uv: float
    ) -> "ErrpTemplate":
        weights = np.array([_ERRP_WEIGHTS.get(ch, 0.5) for ch in channel_labels])
        return cls(
            ne_amplitude=-0.8 * amplitude_uv,
            pe_amplitude=1.0 * amplitude_uv,
            channel_weights=weights,
        )


def expected_error_count(cfg: SynthConfig) -> float:
    base = ERROR_RATE_PROFILE[cfg.difficulty][cfg.environment]
    return base * cfg.block_duration_s / PROFILE_BLOCK_DURATION_S


def generate_events(cfg: SynthConfig) -> EventLog:
    """Poisson error events plus non-error interactions for one block.

    Times are relative to the block start (the session assembler offsets
    them); the expected error count follows the difficulty/environment
    profile scaled by the block duration.
    """
    rng = rng_for(cfg.seed, "events")
    duration = cfg.block_duration_s

    n_errors = rng.poisson(expected_error_count(cfg))
    error_times = np.sort(rng.uniform(0.0, duration, size=n_errors))
    n_non = rng.poisson(NON_ERROR_RATE_FACTOR * expected_error_count(cfg))
    non_times = np.sort(rng.uniform(0.0, duration, size=n_non))

    tasks = list(Task)
    events = [
        (t, EventKind.ERROR, tasks[rng.integers(len(tasks))]) for t in error_times
    ] + [
        (t, EventKind.NON_ERROR, tasks[rng.integers(len(tasks))]) for t in non_times
    ]
    events.sort(key=lambda item: item[0])
    return EventLog(
        events=tuple(
            Event(
                time_s=float(t),
                kind=kind,
                task=task,
                difficulty=cfg.difficulty,
                environment=cfg.environment,
                participant_id=cfg.participant_id,
            )
            for t, kind, task in events
        )
    )


def embed_errp(
    eeg: SampledSignal, events: EventLog, template: ErrpTemplate
) -> tuple[SampledSignal, int]:
    """Add the template at every error event; returns (signal, skipped count).

    Each error event at t contributes a negative Gaussian bump at
    t + ne_latency and a positive one at t + pe_latency, scaled per channel.
    Events whose 1-second tail exits the signal are skipped and counted.
    The operation is additive, so embeddings commute and scale linearly.
    """
    if template.channel_weights.size != eeg.n_channels:
        raise ValidationError(
            f"{template.channel_weights.size} channel weights for {eeg.n_channels} channels"
        )
    out = eeg.samples.copy()
    rate = eeg.rate_hz
    t_axis_start = eeg.start_epoch_s
    skipped = 0
    weights = template.channel_weights[:, np.newaxis]
    for event in events.errors():
        if event.time_s + 1.0 > eeg.end_epoch_s:
            skipped += 1
            continue
        for amp, latency, width in (
            (template.ne_amplitude, template.ne_latency_s, template.ne_width_s),
            (template.pe_amplitude, template.pe_latency_s, template.pe_width_s),
        ):
            centre = event.time_s + latency
            lo = max(0, int(math.floor((centre - 4 * width - t_axis_start) * rate)))
            hi = min(eeg.n_samples, int(math.ceil((centre + 4 * width - t_axis_start) * rate)) + 1)
            if hi <= lo:
                continue
            t_rel = t_axis_start + np.arange(lo, hi) / rate - centre
            bump = amp * np.exp(-0.5 * (t_rel / width) ** 2)
            out[:, lo:hi] += weights * bump
    return eeg.with_samples(out), skipped


# ---------------------------------------------------------------------------
# Stream synthesis helpers
# ---------------------------------------------------------------------------


def _pink_noise(rng: np.random.Generator, shape: tuple[int, int], rate_hz: float, sigma: float) -> np.ndarray:
    """1/f-amplitude noise per row, normalised to the requested std."""
    channels, n = shape
    white = rng.normal(size=(channels, n))
    spectrum = np.fft.rfft(white, axis=-1)
    freqs = np.fft.rfftfreq(n, d=1.0 / rate_hz)
    shaping = 1.0 / np.sqrt(np.maximum(freqs, 0.5))
    shaping[0] = 0.0
    shaped = np.fft.irfft(spectrum * shaping, n=n, axis=-1)
    std = shaped.std(axis=-1, keepdims=True)
    std[std == 0] = 1.0
    return shaped / std * sigma


def _bandlimited_noise(
    rng: np.random.Generator,
    shape: tuple[int, int],
    rate_hz: float,
    low_hz: float,
    high_hz: float,
    sigma: float,
) -> np.ndarray:
    channels, n = shape
    white = rng.normal(size=(channels, n))
    spectrum = np.fft.rfft(white, axis=-1)
    freqs = np.fft.rfftfreq(n, d=1.0 / rate_hz)
    mask = (freqs >= low_hz) & (freqs <= high_hz)
    shaped = np.fft.irfft(spectrum * mask, n=n, axis=-1)
    std = shaped.std(axis=-1, keepdims=True)
    std[std == 0] = 1.0
    return shaped / std * sigma


#: PQRST component Gaussians: (offset from R in s, amplitude in mV, width in s).
_PQRST = (
    (-0.200, 0.15, 0.025),
    (-0.025, -0.12, 0.010),
    (0.000, 1.00, 0.012),
    (0.025, -0.25, 0.010),
    (0.220, 0.35, 0.045),
)


def synth_pqrst_train(
    beat_times_s: np.ndarray, duration_s: float, rate_hz: float = ECG_RATE_HZ
) -> np.ndarray:
    """Clean PQRST waveform with R peaks at the given beat times (1 x N)."""
    n = round(duration_s * rate_hz)
    x = np.zeros(n)
    for tb in np.asarray(beat_times_s, dtype=np.float64):
        lo = max(0, int((tb - 0.35) * rate_hz))
        hi = min(n, int((tb + 0.40) * rate_hz) + 1)
        if hi <= lo:
            continue
        t_rel = np.arange(lo, hi) / rate_hz - tb
        for offset, amp, width in _PQRST:
            x[lo:hi] += amp * np.exp(-0.5 * ((t_rel - offset) / width) ** 2)
    return x[np.newaxis, :]


def _beat_times(
    rng: np.random.Generator,
    duration_s: float,
    mean_rr_ms: float,
    jitter_ms: float,
    post_error_drop_ms: float,
    error_times: np.ndarray,
) -> np.ndarray:
    """Beat schedule with Gaussian RR jitter and brief post-error shortening."""
    times = []
    t = float(rng.uniform(0.0, mean_rr_ms / 1000.0))
    while t < duration_s:
        times.append(t)
        rr = mean_rr_ms + jitter_ms * rng.normal()
        if post_error_drop_ms > 0 and error_times.size:
            gaps = t - error_times
            recent = gaps[(gaps >= 0.0) & (gaps <= 3.0)]
            if recent.size:
                rr -= post_error_drop_ms * math.exp(-float(recent.min()) / 1.0)
        t += max(rr, 300.0) / 1000.0
    return np.asarray(times)


def _gaze_base(
    rng: np.random.Generator, n: int, rate_hz: float
) -> np.ndarray:
    """Fixation hold / instantaneous jump scan path with small tremor (2 x N)."""
    xy = np.empty((2, n))
    pos = np.array([0.0, 0.0])
    idx = 0
    while idx < n:
        hold = int(rng.uniform(0.2, 0.5) * rate_hz)
        hold = max(hold, 1)
        end = min(n, idx + hold)
        xy[:, idx:end] = pos[:, np.newaxis]
        idx = end
        angle = rng.uniform(0.0, 2.0 * np.pi)
        magnitude = rng.uniform(2.0, 10.0)
        pos = np.clip(pos + magnitude * np.array([np.cos(angle), np.sin(angle)]), -15.0, 15.0)
    xy += rng.normal(0.0, 0.05, size=xy.shape)
    return xy


#: fraction of errors that actually draw a reactive glance; misses keep the
#: eye-tracking signature from being a giveaway.
REACTIVE_SACCADE_PROB = 0.6


def _reactive_saccades(
    rng: np.random.Generator,
    xy: np.ndarray,
    rate_hz: float,
    error_times: np.ndarray,
    magnitude_deg: float,
) -> None:
    """Add a there-and-back gaze excursion shortly after most errors."""
    if magnitude_deg <= 0:
        return
    n = xy.shape[1]
    for t_err in error_times:
        angle = rng.uniform(0.0, 2.0 * np.pi)
        latency = rng.uniform(0.12, 0.25)
        dwell = rng.uniform(0.12, 0.25)
        responded = rng.uniform() < REACTIVE_SACCADE_PROB
        if not responded:
            continue
        offset = magnitude_deg * np.array([np.cos(angle), np.sin(angle)])
        lo = int((t_err + latency) * rate_hz)
        hi = min(n, int((t_err + latency + dwell) * rate_hz))
        if lo >= n or hi <= lo:
            continue
        xy[:, lo:hi] += offset[:, np.newaxis]


def _pupil_base(
    rng: np.random.Generator,
    n: int,
    rate_hz: float,
    dilation_mm: float,
    error_times: np.ndarray,
) -> np.ndarray:
    t = np.arange(n) / rate_hz
    phase = rng.uniform(0.0, 2.0 * np.pi)
    pupil = 3.0 + 0.1 * np.sin(2.0 * np.pi * 0.05 * t + phase)
    pupil += _bandlimited_noise(rng, (1, n), rate_hz, 0.02, 0.5, 0.06)[0]
    if dilation_mm > 0:
        for t_err in error_times:
            scale = rng.uniform(0.4, 1.6)  # trial-to-trial response variability
            delta = t - t_err
            active = (delta > 0) & (delta < 3.0)
            d = delta[active] / 0.6
            pupil[active] += scale * dilation_mm * d * np.exp(1.0 - d)
    return pupil[np.newaxis, :]


def _blink_spans(
    rng: np.random.Generator, duration_s: float, blink_rate_hz: float, rate_hz: float
) -> list[tuple[int, int]]:
    """Blink dropouts as (start_index, length); durations uniform in [70, 450] ms."""
    if blink_rate_hz <= 0:
        return []
    n_blinks = rng.poisson(blink_rate_hz * duration_s)
    starts = np.sort(rng.uniform(0.0, duration_s, size=n_blinks))
    durations = rng.uniform(0.070, 0.450, size=n_blinks)
    min_len = round(0.070 * rate_hz)
    max_len = round(0.450 * rate_hz)
    spans: list[tuple[int, int]] = []
    prev_end = -math.inf
    n = round(duration_s * rate_hz)
    for start, dur in zip(starts, durations):
        if start <= prev_end + 0.1:
            continue  # merged blinks would exceed the duration envelope
        length = int(np.clip(round(dur * rate_hz), min_len, max_len))
        lo = int(start * rate_hz)
        if lo + length > n:
            continue
        spans.append((lo, length))
        prev_end = start + dur
    return spans


def generate_session(configs: list[SynthConfig]) -> SessionBundle:
    """Compose consecutive difficulty blocks into one recorded session.

    All configs must share participant and environment and carry distinct
    seeds. Session-level streams are seeded from the first block's seed;
    block event streams use their own seeds.
    """
    if not configs:
        raise ValidationError("at least one block config is required")
    first = configs[0]
    for cfg in configs[1:]:
        if cfg.participant_id != first.participant_id or cfg.environment != first.environment:
            raise ValidationError("blocks of one session must share participant and environment")
    if len({cfg.seed for cfg in configs}) != len(configs):
        raise ValidationError("block seeds must be distinct")

    duration = sum(cfg.block_duration_s for cfg in configs)
    session_seed = first.seed

    # Events: per-block logs shifted onto the session clock.
    offset = 0.0
    all_events: list[Event] = []
    block_spans: list[tuple[SynthConfig, float]] = []
    for cfg in configs:
        block_events = generate_events(cfg)
        all_events.extend(
            replace(e, time_s=e.time_s + offset) for e in block_events
        )
        block_spans.append((cfg, offset))
        offset += cfg.block_duration_s
    all_events.sort(key=lambda e: e.time_s)
    events = EventLog(events=tuple(all_events))
    error_times = events.error_times()

    # EEG: pink background + motion artifact + per-block error potentials.
    n_eeg = round(duration * EEG_RATE_HZ)
    eeg_samples = _pink_noise(
        rng_for(session_seed, "eeg-noise"), (len(EEG_CHANNELS), n_eeg), EEG_RATE_HZ, first.noise_sigma_uv
    )
    if first.motion_artifact_gain > 0:
        eeg_samples += _bandlimited_noise(
            rng_for(session_seed, "eeg-motion"),
            (len(EEG_CHANNELS), n_eeg),
            EEG_RATE_HZ,
            0.5,
            4.0,
            first.motion_artifact_gain * first.motion_sigma_uv,
        )
    eeg = SampledSignal(EEG_CHANNELS, EEG_RATE_HZ, 0.0, eeg_samples)
    participant_scale = 0.85 + 0.3 * (
        derive_seed(0, f"errp-scale:{first.participant_id}") / 2.0**64
    )
    for cfg, block_start in block_spans:
        if cfg.errp_amplitude_uv <= 0:
            continue
        template = ErrpTemplate.default(
            EEG_CHANNELS, cfg.errp_amplitude_uv * participant_scale
        )
        block_log = EventLog(
            events=tuple(
                e
                for e in events
                if block_start <= e.time_s < block_start + cfg.block_duration_s
            )
        )
        eeg, _ = embed_errp(eeg, block_log, template)

    # ECG: PQRST train with jittered RR and optional post-error shortening.
    rng_ecg = rng_for(session_seed, "ecg")
    beats = _beat_times(
        rng_ecg, duration, first.mean_rr_ms, first.rr_jitter_ms,
        first.rr_post_error_drop_ms, error_times,
    )
    ecg_samples = synth_pqrst_train(beats, duration)
    n_ecg = ecg_samples.shape[1]
    t_ecg = np.arange(n_ecg) / ECG_RATE_HZ
    ecg_samples = ecg_samples + 0.12 * np.sin(2.0 * np.pi * 0.15 * t_ecg + rng_ecg.uniform(0, 2 * np.pi))
    ecg_samples = ecg_samples + rng_ecg.normal(0.0, 0.02, size=ecg_samples.shape)
    ecg = SampledSignal(("ecg",), ECG_RATE_HZ, 0.0, ecg_samples)

    # Gaze and pupil share blink dropouts.
    n_gaze = round(duration * GAZE_RATE_HZ)
    rng_gaze = rng_for(session_seed, "gaze")
    gaze_xy = _gaze_base(rng_gaze, n_gaze, GAZE_RATE_HZ)
    _reactive_saccades(
        rng_gaze, gaze_xy, GAZE_RATE_HZ, error_times, first.gaze_saccade_on_error_deg
    )
    pupil_samples = _pupil_base(
        rng_for(session_seed, "pupil"), n_gaze, GAZE_RATE_HZ,
        first.pupil_dilation_mm, error_times,
    )
    for lo, length in _blink_spans(
        rng_for(session_seed, "blinks"), duration, first.blink_rate_hz, GAZE_RATE_HZ
    ):
        gaze_xy[:, lo : lo + length] = np.nan
        pupil_samples[:, lo : lo + length] = np.nan
    gaze = SampledSignal(("gaze_x", "gaze_y"), GAZE_RATE_HZ, 0.0, gaze_xy)
    pupil = SampledSignal(("pupil",), GAZE_RATE_HZ, 0.0, pupil_samples)

    return SessionBundle(
        participant_id=first.participant_id,
        environment=first.environment,
        eeg=eeg,
        ecg=ecg,
        gaze=gaze,
        pupil=pupil,
        events=events,
    )


@dataclass(frozen=True)
class StudyConfig:
    """Whole-study generation parameters (participants x environments)."""

    n_participants: int = 9
    environments: tuple[Environment, ...] = tuple(Environment)
    block_duration_s: float = 180.0
    et_participants: tuple[str, ...] = ("P3", "P4", "P5", "P6")
    motion_gains: dict[Environment, float] = field(
        default_factory=lambda: dict(DEFAULT_MOTION_GAINS)
    )
    errp_amplitude_uv: float = 25.0
    noise_sigma_uv: float = 10.0
    motion_sigma_uv: float = 1.0
    pupil_dilation_mm: float = 0.12
    blink_rate_hz: float = 0.2
    mean_rr_ms: float = 850.0
    rr_jitter_ms: float = 35.0
    rr_post_error_drop_ms: float = 8.0
    gaze_saccade_on_error_deg: float = 6.0

    def participant_ids(self) -> tuple[str, ...]:
        return tuple(f"P{i + 1}" for i in range(self.n_participants))

    def zero_signal(self) -> "StudyConfig":
        return replace(
            self,
            errp_amplitude_uv=0.0,
            rr_post_error_drop_ms=0.0,
            pupil_dilation_mm=0.0,
            gaze_saccade_on_error_deg=0.0,
        )


def session_configs(
    study: StudyConfig, participant_id: str, environment: Environment, master_seed: int
) -> list[SynthConfig]:
    """Three difficulty blocks in a seed-shuffled order for one session."""
    session_seed = derive_seed(master_seed, f"session:{participant_id}:{environment.value}")
    order = list(Difficulty)
    rng_for(session_seed, "block-order").shuffle(order)
    return [
        SynthConfig(
            participant_id=participant_id,
            environment=environment,
            difficulty=difficulty,
            seed=derive_seed(session_seed, f"block:{difficulty.value}"),
            block_duration_s=study.block_duration_s,
            errp_amplitude_uv=study.errp_amplitude_uv,
            noise_sigma_uv=study.noise_sigma_uv,
            motion_artifact_gain=study.motion_gains.get(environment, 0.0),
            motion_sigma_uv=study.motion_sigma_uv,
            pupil_dilation_mm=study.pupil_dilation_mm,
            blink_rate_hz=study.blink_rate_hz,
            mean_rr_ms=study.mean_rr_ms,
            rr_jitter_ms=study.rr_jitter_ms,
            rr_post_error_drop_ms=study.rr_post_error_drop_ms,
            gaze_saccade_on_error_deg=study.gaze_saccade_on_error_deg,
        )
        for difficulty in order
    ]


def generate_study(master_seed: int, study: StudyConfig | None = None) -> list[SessionBundle]:
    """All participant x environment sessions for a study configuration.

    Participants outside study.et_participants get no gaze/pupil streams,
    mirroring the restricted eye-tracking availability.
    """
    study = study or StudyConfig()
    bundles = []
    for pid in study.participant_ids():
        for env in study.environments:
            bundle = generate_session(session_configs(study, pid, env, master_seed))
            if pid not in study.et_participants:
                bundle = replace(bundle, gaze=None, pupil=None)
            bundles.append(bundle)
    return bundles
