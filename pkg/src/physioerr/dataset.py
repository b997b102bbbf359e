"""Balanced labelled window datasets.

Error windows start at logged error timestamps and span one second after
them, capturing the post-error potential range. Non-error windows are drawn
uniformly (stratified across difficulty cells) from a width-aligned grid
kept a guard distance away from every error event. Every emitted dataset
has exactly equal class counts.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CapacityError, DegenerateInputError, ValidationError
from .features import FeatureConfig, FeatureVector, Modality
from .pipeline import PreprocessedSession, extract_window_features
from .seeding import derive_seed, rng_for
from .signals import Difficulty, Environment, EventKind, SessionBundle

#: windows overlapping an error event's neighbourhood closer than this are
#: not eligible non-error samples (distance is min over the window span).
DEFAULT_GUARD_S = 2.0


@dataclass(frozen=True)
class DatasetConfig:
    width_s: float = 1.0
    guard_s: float = DEFAULT_GUARD_S
    seed: int = 0
    features: FeatureConfig = FeatureConfig()


@dataclass(frozen=True)
class WindowSample:
    participant_id: str
    environment: Environment
    difficulty: Difficulty
    modality: Modality
    t_start_s: float
    label: EventKind
    features: FeatureVector


@dataclass(frozen=True)
class Dataset:
    samples: tuple[WindowSample, ...]
    feature_names: tuple[str, ...]
    modality: Modality
    meta: dict

    def __post_init__(self):
        counts = self.class_counts()
        if counts[EventKind.ERROR] != counts[EventKind.NON_ERROR]:
            raise ValidationError(f"unbalanced dataset: {counts}")
        for s in self.samples:
            if s.features.names != self.feature_names:
                raise ValidationError("inconsistent feature names across samples")

    def __len__(self) -> int:
        return len(self.samples)

    def class_counts(self) -> dict[EventKind, int]:
        counts = {EventKind.ERROR: 0, EventKind.NON_ERROR: 0}
        for s in self.samples:
            counts[s.label] += 1
        return counts

    @property
    def X(self) -> np.ndarray:
        return np.vstack([s.features.values for s in self.samples])

    @property
    def y(self) -> np.ndarray:
        return np.array([1 if s.label is EventKind.ERROR else 0 for s in self.samples])

    @property
    def participants(self) -> np.ndarray:
        return np.array([s.participant_id for s in self.samples])

    @property
    def environments(self) -> np.ndarray:
        return np.array([s.environment.value for s in self.samples])

    def participant_ids(self) -> tuple[str, ...]:
        return tuple(sorted(set(s.participant_id for s in self.samples)))

    def subset(self, participant_id: str) -> "Dataset":
        kept = tuple(s for s in self.samples if s.participant_id == participant_id)
        return Dataset(
            samples=kept,
            feature_names=self.feature_names,
            modality=self.modality,
            meta={**self.meta, "subset_participant": participant_id},
        )


def make_error_windows(
    bundle: SessionBundle, width_s: float = 1.0
) -> tuple[np.ndarray, int]:
    """Window starts [t, t+width) for every error event; returns (starts, dropped).

    Events whose window would leave the common signal span are dropped and
    counted. Error windows may overlap each other (events can be closer
    than one width); non-error windows never overlap anything.
    """
    span_start, span_end = bundle.span()
    starts = []
    dropped = 0
    for t in bundle.events.error_times():
        if t >= span_start and t + width_s <= span_end:
            starts.append(t)
        else:
            dropped += 1
    return np.asarray(starts, dtype=np.float64), dropped


def _window_event_distance(starts: np.ndarray, width_s: float, event_times: np.ndarray) -> np.ndarray:
    """min over the window span of |t - event|, minimised over events."""
    if event_times.size == 0:
        return np.full(starts.shape, np.inf)
    before = starts[:, np.newaxis] - event_times[np.newaxis, :]
    after = event_times[np.newaxis, :] - (starts[:, np.newaxis] + width_s)
    return np.maximum(np.maximum(before, after), 0.0).min(axis=1)


def _nearest_event_difficulty(bundle: SessionBundle, starts: np.ndarray) -> list[Difficulty]:
    """Difficulty cell of each window = difficulty of the nearest logged event."""
    times = np.array([e.time_s for e in bundle.events])
    if times.size == 0:
        return [Difficulty.LOW for _ in starts]
    difficulties = [e.difficulty for e in bundle.events]
    idx = np.searchsorted(times, starts)
    out = []
    for s, i in zip(starts, idx):
        lo = max(0, i - 1)
        hi = min(times.size - 1, i)
        nearest = lo if abs(times[lo] - s) <= abs(times[hi] - s) else hi
        out.append(difficulties[nearest])
    return out


def _shuffled_cells(
    bundle: SessionBundle, width_s: float, guard_s: float, seed: int
) -> dict[Difficulty, np.ndarray]:
    """Eligible grid starts per difficulty cell, in seeded shuffled order."""
    span_start, span_end = bundle.span()
    n_slots = int(np.floor((span_end - span_start) / width_s + 1e-9))
    grid = span_start + np.arange(n_slots) * width_s
    grid = grid[grid + width_s <= span_end + 1e-9]
    distance = _window_event_distance(grid, width_s, bundle.events.error_times())
    eligible = grid[distance > guard_s]

    cells: dict[Difficulty, list[float]] = {}
    for start, difficulty in zip(eligible, _nearest_event_difficulty(bundle, eligible)):
        cells.setdefault(difficulty, []).append(start)

    rng = rng_for(seed, "nonerror-draw")
    shuffled = {}
    for difficulty in Difficulty:  # fixed iteration order keeps draws deterministic
        if difficulty in cells:
            starts = np.asarray(cells[difficulty])
            shuffled[difficulty] = starts[rng.permutation(starts.size)]
    return shuffled


def _proportional_quotas(counts: dict[Difficulty, int], n: int) -> dict[Difficulty, int]:
    total = sum(counts.values())
    quotas = {}
    remainders = []
    assigned = 0
    for difficulty, count in counts.items():
        exact = n * count / total
        quotas[difficulty] = int(np.floor(exact))
        assigned += quotas[difficulty]
        remainders.append((-(exact - np.floor(exact)), list(Difficulty).index(difficulty), difficulty))
    for _, _, difficulty in sorted(remainders):
        if assigned >= n:
            break
        quotas[difficulty] += 1
        assigned += 1
    return quotas


def sample_nonerror_windows(
    bundle: SessionBundle,
    n: int,
    width_s: float = 1.0,
    guard_s: float = DEFAULT_GUARD_S,
    seed: int = 0,
) -> np.ndarray:
    """Draw n guard-respecting window starts without replacement.

    Candidates live on the width-aligned grid, stay strictly more than
    guard_s away from every error event, and are stratified across the
    difficulty cells present (proportionally to each cell's candidate
    count). Deterministic given the seed.
    """
    cells = _shuffled_cells(bundle, width_s, guard_s, seed)
    counts = {difficulty: starts.size for difficulty, starts in cells.items()}
    total = sum(counts.values())
    if n > total:
        raise CapacityError(
            f"requested {n} non-error windows but only {total} candidates exist "
            f"(per cell: { {d.value: c for d, c in counts.items()} })"
        )
    quotas = _proportional_quotas(counts, n)
    chosen = np.concatenate(
        [cells[difficulty][: quotas[difficulty]] for difficulty in cells if quotas.get(difficulty)]
        or [np.empty(0)]
    )
    return np.sort(chosen)


def build_dataset(
    preps: list[PreprocessedSession],
    modality: Modality,
    config: DatasetConfig | None = None,
) -> Dataset:
    """Balanced per-session windows with features extracted.

    Per session, every in-span error event becomes an error window; an equal
    number of non-error windows is drawn from the guard-respecting grid.
    Windows whose features come out degenerate are excluded: non-error
    windows are redrawn from the remaining candidates, error windows are
    dropped (reducing the non-error target to keep balance). Sessions
    lacking the modality's streams are skipped with a warning entry.
    """
    config = config or DatasetConfig()
    samples: list[WindowSample] = []
    skipped_sessions: list[str] = []
    stats: dict[str, dict] = {}

    for prep in preps:
        session_key = f"{prep.participant_id}/{prep.environment.value}"
        if modality is Modality.ET and not prep.has_eye_tracking:
            skipped_sessions.append(session_key)
            continue

        error_starts, dropped = make_error_windows(prep.bundle, config.width_s)
        error_difficulty = _nearest_event_difficulty(prep.bundle, error_starts)

        kept_errors: list[WindowSample] = []
        flagged_errors = 0
        for t, difficulty in zip(error_starts, error_difficulty):
            try:
                fv = extract_window_features(prep, float(t), modality, config.features)
            except DegenerateInputError:
                flagged_errors += 1
                continue
            kept_errors.append(
                WindowSample(
                    participant_id=prep.participant_id,
                    environment=prep.environment,
                    difficulty=difficulty,
                    modality=modality,
                    t_start_s=float(t),
                    label=EventKind.ERROR,
                    features=fv,
                )
            )

        target = len(kept_errors)
        cell_seed = derive_seed(config.seed, f"nonerror:{session_key}:{modality.value}")
        cells = _shuffled_cells(prep.bundle, config.width_s, config.guard_s, cell_seed)
        counts = {difficulty: starts.size for difficulty, starts in cells.items()}
        if target > 0 and not counts:
            raise CapacityError(f"{session_key}: no eligible non-error candidates")
        quotas = _proportional_quotas(counts, target) if counts else {}

        kept_nonerror: list[WindowSample] = []
        flagged_nonerror = 0
        cursors = {difficulty: 0 for difficulty in cells}

        def try_take(difficulty: Difficulty) -> bool:
            nonlocal flagged_nonerror
            starts = cells[difficulty]
            while cursors[difficulty] < starts.size:
                t = float(starts[cursors[difficulty]])
                cursors[difficulty] += 1
                try:
                    fv = extract_window_features(prep, t, modality, config.features)
                except DegenerateInputError:
                    flagged_nonerror += 1
                    continue
                kept_nonerror.append(
                    WindowSample(
                        participant_id=prep.participant_id,
                        environment=prep.environment,
                        difficulty=difficulty,
                        modality=modality,
                        t_start_s=t,
                        label=EventKind.NON_ERROR,
                        features=fv,
                    )
                )
                return True
            return False

        for difficulty, quota in quotas.items():
            taken = 0
            while taken < quota and try_take(difficulty):
                taken += 1
        while len(kept_nonerror) < target:
            # stratified pools exhausted by flagged redraws: borrow anywhere
            if not any(try_take(difficulty) for difficulty in cells):
                raise CapacityError(
                    f"{session_key}: only {len(kept_nonerror)} usable non-error "
                    f"windows for {target} error windows"
                )

        samples.extend(kept_errors)
        samples.extend(kept_nonerror)
        stats[session_key] = {
            "error_windows": len(kept_errors),
            "dropped_out_of_span": dropped,
            "flagged_error_windows": flagged_errors,
            "flagged_nonerror_windows": flagged_nonerror,
        }

    if not samples:
        raise CapacityError(f"no usable sessions for modality {modality.value}")

    samples.sort(
        key=lambda s: (s.participant_id, s.environment.value, s.t_start_s, s.label.value)
    )
    _check_overlaps(samples, config.width_s)
    return Dataset(
        samples=tuple(samples),
        feature_names=samples[0].features.names,
        modality=modality,
        meta={
            "seed": config.seed,
            "width_s": config.width_s,
            "guard_s": config.guard_s,
            "sessions": stats,
            "skipped_sessions": skipped_sessions,
        },
    )


def _check_overlaps(samples: list[WindowSample], width_s: float) -> None:
    """Error windows may overlap each other; everything else may not."""
    by_session: dict[tuple[str, str], list[WindowSample]] = {}
    for s in samples:
        by_session.setdefault((s.participant_id, s.environment.value), []).append(s)
    for group in by_session.values():
        group = sorted(group, key=lambda s: s.t_start_s)
        for a, b in zip(group, group[1:]):
            if b.t_start_s < a.t_start_s + width_s:
                if a.label is EventKind.ERROR and b.label is EventKind.ERROR:
                    continue
                raise ValidationError(
                    f"overlapping windows at t={a.t_start_s} and t={b.t_start_s}"
                )


def save_dataset_csv(dataset: Dataset, path: str | Path) -> None:
    """Feature matrix CSV plus a sidecar JSON with draw provenance."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["participant_id", "environment", "difficulty", "t_start_s", "label", *dataset.feature_names]
        )
        for s in dataset.samples:
            writer.writerow(
                [
                    s.participant_id,
                    s.environment.value,
                    s.difficulty.value,
                    repr(s.t_start_s),
                    s.label.value,
                    *(repr(float(v)) for v in s.features.values),
                ]
            )
    sidecar = {
        "modality": dataset.modality.value,
        "n_samples": len(dataset),
        "class_counts": {k.value: v for k, v in dataset.class_counts().items()},
        **dataset.meta,
    }
    Path(str(path) + ".meta.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
