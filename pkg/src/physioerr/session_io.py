"""Session directory round-trip.

Layout:
    manifest.json   participant_id, environment, per-stream rate/channels/file/epoch
    eeg.csv         t_s + one column per channel
    ecg.csv
    gaze.csv        optional (x, y)
    pupil.csv       optional
    events.csv      t_s,kind,task,difficulty,environment,participant_id

CSV rules: header row; column 1 is t_s printed with 6 fractional digits
(presentational only, timestamps are reconstructed from the manifest rate
and epoch); an empty field is a missing sample (NaN). Sample values are
written with repr-level precision so load(save(x)) restores them exactly.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
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

MANIFEST_NAME = "manifest.json"
STREAM_ORDER = ("eeg", "ecg", "gaze", "pupil")
_EVENT_FIELDS = ("t_s", "kind", "task", "difficulty", "environment", "participant_id")


def _format_value(x: float) -> str:
    return "" if math.isnan(x) else repr(float(x))


def _write_stream_csv(path: Path, signal: SampledSignal) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_s", *signal.channel_labels])
        t0 = signal.start_epoch_s
        rate = signal.rate_hz
        for n in range(signal.n_samples):
            row = [f"{t0 + n / rate:.6f}"]
            row.extend(_format_value(v) for v in signal.samples[:, n])
            writer.writerow(row)


def _read_stream_csv(path: Path, spec: dict) -> SampledSignal:
    if not path.is_file():
        raise FormatError(f"stream file missing: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path.name}: empty file") from None
        if not header or header[0] != "t_s":
            raise FormatError(f"{path.name}: first column must be t_s")
        labels = header[1:]
        if labels != list(spec["channels"]):
            raise ValidationError(
                f"{path.name}: channels {labels} do not match manifest {spec['channels']}"
            )
        t_vals: list[float] = []
        columns: list[list[float]] = []
        for row in reader:
            if len(row) != len(labels) + 1:
                raise FormatError(f"{path.name}: row with {len(row)} fields, expected {len(labels) + 1}")
            t_vals.append(float(row[0]))
            columns.append([float(v) if v != "" else math.nan for v in row[1:]])
    if not t_vals:
        raise FormatError(f"{path.name}: no data rows")
    rate = float(spec["rate_hz"])
    if len(t_vals) > 1:
        implied_dt = (t_vals[-1] - t_vals[0]) / (len(t_vals) - 1)
        if not math.isclose(implied_dt, 1.0 / rate, rel_tol=1e-3):
            raise ValidationError(
                f"{path.name}: rows imply {1.0 / implied_dt:.3f} Hz but manifest says {rate} Hz"
            )
    samples = np.asarray(columns, dtype=np.float64).T
    return SampledSignal(
        channel_labels=tuple(spec["channels"]),
        rate_hz=rate,
        start_epoch_s=float(spec["start_epoch_s"]),
        samples=samples,
    )


def _write_events_csv(path: Path, events: EventLog) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_EVENT_FIELDS)
        for e in events:
            writer.writerow(
                [
                    repr(float(e.time_s)),
                    e.kind.value,
                    e.task.value,
                    e.difficulty.value,
                    e.environment.value,
                    e.participant_id,
                ]
            )


def _read_events_csv(path: Path) -> EventLog:
    if not path.is_file():
        raise FormatError(f"events file missing: {path}")
    events = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != list(_EVENT_FIELDS):
            raise FormatError(f"events.csv: header {reader.fieldnames} != {list(_EVENT_FIELDS)}")
        for row in reader:
            events.append(
                Event(
                    time_s=float(row["t_s"]),
                    kind=EventKind(row["kind"]),
                    task=Task(row["task"]),
                    difficulty=Difficulty(row["difficulty"]),
                    environment=Environment(row["environment"]),
                    participant_id=row["participant_id"],
                )
            )
    return EventLog(events=tuple(events))


def save_session(bundle: SessionBundle, path: str | Path) -> None:
    """Write a session directory; load_session(path) restores the bundle."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest: dict = {
        "participant_id": bundle.participant_id,
        "environment": bundle.environment.value,
        "streams": {},
    }
    for name, signal in bundle.streams().items():
        fname = f"{name}.csv"
        manifest["streams"][name] = {
            "file": fname,
            "rate_hz": signal.rate_hz,
            "channels": list(signal.channel_labels),
            "start_epoch_s": signal.start_epoch_s,
        }
        _write_stream_csv(path / fname, signal)
    _write_events_csv(path / "events.csv", bundle.events)
    with (path / MANIFEST_NAME).open("w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_session(path: str | Path) -> SessionBundle:
    """Parse a session directory written by save_session.

    Raises FormatError for missing/garbled files and ValidationError when
    the data contradicts the manifest (rate mismatch, unsorted events).
    """
    path = Path(path)
    manifest_path = path / MANIFEST_NAME
    if not manifest_path.is_file():
        raise FormatError(f"no {MANIFEST_NAME} in {path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{MANIFEST_NAME}: {exc}") from exc
    try:
        streams_spec = manifest["streams"]
        participant_id = manifest["participant_id"]
        environment = Environment(manifest["environment"])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{MANIFEST_NAME}: missing or invalid field ({exc})") from exc

    loaded: dict[str, SampledSignal] = {}
    for name in STREAM_ORDER:
        if name in streams_spec:
            spec = streams_spec[name]
            loaded[name] = _read_stream_csv(path / spec["file"], spec)
    for required in ("eeg", "ecg"):
        if required not in loaded:
            raise FormatError(f"{MANIFEST_NAME}: required stream '{required}' missing")

    events = _read_events_csv(path / "events.csv")
    return SessionBundle(
        participant_id=participant_id,
        environment=environment,
        eeg=loaded["eeg"],
        ecg=loaded["ecg"],
        gaze=loaded.get("gaze"),
        pupil=loaded.get("pupil"),
        events=events,
    )
