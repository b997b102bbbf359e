"""Core time-series and event data model.

All streams in a session share one clock: `start_epoch_s` is expressed in
seconds on the session clock, and an event at time t lines up with sample
floor((t - start_epoch_s) * rate_hz) of every stream. Instances are treated
as immutable after construction; operations return new objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .errors import RangeError, ValidationError


class EventKind(Enum):
    ERROR = "error"
    NON_ERROR = "non_error"


class Task(Enum):
    RADIO_COMMS = "radio_comms"
    GROUND_THREATS = "ground_threats"
    WARNINGS_PANEL = "warnings_panel"


class Difficulty(Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"


class Environment(Enum):
    BASELINE = "baseline"
    STRAIGHT_LEVEL = "straight_level"
    TWO_G = "two_g"


#: Table-1 style reporting partition: baseline on the ground, everything else in the air.
AIRBORNE_ENVIRONMENTS = (Environment.STRAIGHT_LEVEL, Environment.TWO_G)


@dataclass(frozen=True)
class SampledSignal:
    """Uniform-rate multi-channel time series.

    samples is [n_channels x n_samples]; units are microvolts for EEG,
    millivolts for ECG, degrees for gaze x/y and millimetres for pupil
    diameter. NaN marks missing samples (gaze/pupil gaps before
    interpolation); preprocessing outputs destined for feature extraction
    must be NaN-free except where the ops explicitly keep gaps.
    """

    channel_labels: tuple[str, ...]
    rate_hz: float
    start_epoch_s: float
    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 2:
            raise ValidationError(f"samples must be 2-D, got shape {samples.shape}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "channel_labels", tuple(self.channel_labels))
        if not (self.rate_hz > 0 and math.isfinite(self.rate_hz)):
            raise ValidationError(f"rate_hz must be positive, got {self.rate_hz}")
        if len(self.channel_labels) != samples.shape[0]:
            raise ValidationError(
                f"{len(self.channel_labels)} channel labels for {samples.shape[0]} channel rows"
            )

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.rate_hz

    @property
    def end_epoch_s(self) -> float:
        return self.start_epoch_s + self.duration_s

    def with_samples(self, samples: np.ndarray) -> "SampledSignal":
        """Same labels/rate/epoch, new data (must keep the channel count)."""
        return replace(self, samples=samples)

    def channel(self, label: str) -> np.ndarray:
        return self.samples[self.channel_labels.index(label)]


@dataclass(frozen=True)
class Event:
    time_s: float
    kind: EventKind
    task: Task
    difficulty: Difficulty
    environment: Environment
    participant_id: str


@dataclass(frozen=True)
class EventLog:
    """Timestamped interaction events, sorted ascending by time."""

    events: tuple[Event, ...]

    def __post_init__(self):
        events = tuple(self.events)
        object.__setattr__(self, "events", events)
        times = [e.time_s for e in events]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValidationError("events must be sorted ascending by time_s")

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def errors(self) -> tuple[Event, ...]:
        return tuple(e for e in self.events if e.kind is EventKind.ERROR)

    def error_times(self) -> np.ndarray:
        return np.array([e.time_s for e in self.errors()], dtype=np.float64)


@dataclass(frozen=True)
class SessionBundle:
    """One participant x environment recording: all streams plus the event log.

    Gaze and pupil travel together (both present or both absent), mirroring
    that eye tracking was only available for a subset of participants.
    """

    participant_id: str
    environment: Environment
    eeg: SampledSignal
    ecg: SampledSignal
    events: EventLog
    gaze: SampledSignal | None = None
    pupil: SampledSignal | None = None

    def __post_init__(self):
        if (self.gaze is None) != (self.pupil is None):
            raise ValidationError("gaze and pupil streams must be present or absent together")
        span_start, span_end = self.span()
        for event in self.events:
            if not (span_start <= event.time_s < span_end):
                raise ValidationError(
                    f"event at t={event.time_s} outside recorded span [{span_start}, {span_end})"
                )

    @property
    def has_eye_tracking(self) -> bool:
        return self.gaze is not None

    def streams(self) -> dict[str, SampledSignal]:
        out = {"eeg": self.eeg, "ecg": self.ecg}
        if self.gaze is not None:
            out["gaze"] = self.gaze
        if self.pupil is not None:
            out["pupil"] = self.pupil
        return out

    def span(self) -> tuple[float, float]:
        """Common [start, end) covered by every stream present."""
        streams = self.streams().values()
        return (
            max(s.start_epoch_s for s in streams),
            min(s.end_epoch_s for s in streams),
        )


def time_to_index(signal: SampledSignal, t_s: float) -> int:
    """Sample index holding session-clock time t_s.

    index = floor((t_s - start_epoch_s) * rate_hz); t_s must fall inside the
    recorded span.
    """
    if not (signal.start_epoch_s <= t_s < signal.end_epoch_s):
        raise RangeError(
            f"t={t_s} outside signal span [{signal.start_epoch_s}, {signal.end_epoch_s})"
        )
    idx = math.floor((t_s - signal.start_epoch_s) * signal.rate_hz)
    # Guard the half-open upper edge against float round-up.
    return min(idx, signal.n_samples - 1)


def slice_window(signal: SampledSignal, t_start_s: float, duration_s: float) -> SampledSignal:
    """Extract [t_start_s, t_start_s + duration_s) as a new signal.

    The window must lie entirely inside the span; windows are never
    zero-padded. The slice holds round(duration_s * rate_hz) samples per
    channel and its epoch is the time of its first sample.
    """
    if duration_s <= 0:
        raise RangeError(f"duration must be positive, got {duration_s}")
    if t_start_s < signal.start_epoch_s:
        raise RangeError(f"window start {t_start_s} before signal start {signal.start_epoch_s}")
    start = time_to_index(signal, t_start_s)
    n_out = round(duration_s * signal.rate_hz)
    if start + n_out > signal.n_samples:
        raise RangeError(
            f"window [{t_start_s}, {t_start_s + duration_s}) extends past signal end "
            f"{signal.end_epoch_s}"
        )
    return SampledSignal(
        channel_labels=signal.channel_labels,
        rate_hz=signal.rate_hz,
        start_epoch_s=signal.start_epoch_s + start / signal.rate_hz,
        samples=signal.samples[:, start : start + n_out].copy(),
    )
