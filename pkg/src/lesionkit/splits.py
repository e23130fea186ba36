"""Deterministic lesion-size-balanced K-fold assignment.

Subjects are sorted by (lesion_volume, subject_id), cut into consecutive
strata of size k (the last stratum may be smaller), shuffled within each
stratum, and dealt one per fold with the fold order reversing on every
stratum (serpentine dealing). Every fold therefore receives at most one
subject per stratum and fold sizes differ by at most one, which balances
the volume order statistics across folds.

Shuffling uses a splitmix64 stream (increment 0x9E3779B97F4A7C15, mixing
constants 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB) driving a Fisher-Yates
pass with modulo draws, so the same (records, k, seed) always produces the
same assignment, on any platform.
"""

from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass
from pathlib import Path

from .errors import ValidationError

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """Minimal splitmix64 generator; documented so splits are reproducible."""

    def __init__(self, seed: int):
        self._state = int(seed) & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        return self.next_u64() % n


def _shuffle(items: list, rng: SplitMix64) -> None:
    for i in range(len(items) - 1, 0, -1):
        j = rng.below(i + 1)
        items[i], items[j] = items[j], items[i]


@dataclass(frozen=True)
class SubjectRecord:
    subject_id: str
    lesion_volume: int

    def __post_init__(self):
        if self.lesion_volume < 0:
            raise ValidationError(
                f"lesion_volume must be >= 0, got {self.lesion_volume} "
                f"for {self.subject_id!r}"
            )


@dataclass(frozen=True)
class FoldAssignment:
    """Deterministic subject-to-fold mapping for K-fold cross-validation."""

    k: int
    seed: int
    folds: dict[str, int]

    def fold_members(self) -> list[list[str]]:
        members: list[list[str]] = [[] for _ in range(self.k)]
        for subject_id in sorted(self.folds):
            members[self.folds[subject_id]].append(subject_id)
        return members


@dataclass(frozen=True)
class FoldSummary:
    fold: int
    count: int
    mean_volume: float
    median_volume: float


def _check_unique_ids(records) -> None:
    seen = set()
    for r in records:
        if r.subject_id in seen:
            raise ValidationError(f"duplicate subject_id {r.subject_id!r}")
        seen.add(r.subject_id)


def size_balanced_split(records, k: int, seed: int = 0) -> FoldAssignment:
    """Assign subjects to k folds so each fold mirrors the volume distribution."""
    records = list(records)
    if k < 2:
        raise ValidationError(f"k must be >= 2, got {k}")
    if len(records) < k:
        raise ValidationError(f"need at least k={k} subjects, got {len(records)}")
    _check_unique_ids(records)

    ordered = sorted(records, key=lambda r: (r.lesion_volume, r.subject_id))
    rng = SplitMix64(seed)
    folds: dict[str, int] = {}
    for stratum_index, start in enumerate(range(0, len(ordered), k)):
        stratum = ordered[start : start + k]
        _shuffle(stratum, rng)
        fold_order = range(k) if stratum_index % 2 == 0 else range(k - 1, -1, -1)
        for record, fold in zip(stratum, fold_order):
            folds[record.subject_id] = fold
    return FoldAssignment(k=k, seed=int(seed), folds=folds)


def fold_summary(fa: FoldAssignment, records) -> tuple[FoldSummary, ...]:
    """Per-fold subject count, mean volume, and median volume."""
    records = list(records)
    _check_unique_ids(records)
    volume_of = {r.subject_id: r.lesion_volume for r in records}
    unknown = sorted(sid for sid in fa.folds if sid not in volume_of)
    if unknown:
        raise ValidationError(f"assigned subject(s) missing from records: {unknown}")

    per_fold: list[list[int]] = [[] for _ in range(fa.k)]
    for subject_id, fold in fa.folds.items():
        per_fold[fold].append(volume_of[subject_id])
    summaries = []
    for fold, volumes in enumerate(per_fold):
        if not volumes:
            raise ValidationError(f"fold {fold} has no subjects")
        summaries.append(
            FoldSummary(
                fold=fold,
                count=len(volumes),
                mean_volume=sum(volumes) / len(volumes),
                median_volume=float(statistics.median(volumes)),
            )
        )
    return tuple(summaries)


def read_subject_records(path: str | Path) -> list[SubjectRecord]:
    """Read a subject cohort from CSV with header ``subject_id,lesion_volume``."""
    with open(path, newline="") as f:
        rows = [line for line in f if not line.startswith("#")]
    reader = csv.DictReader(rows)
    fields = reader.fieldnames or []
    if "subject_id" not in fields or "lesion_volume" not in fields:
        raise ValidationError(
            f"{path}: expected CSV header with subject_id,lesion_volume, got {fields}"
        )
    records = []
    for row in reader:
        raw = (row["lesion_volume"] or "").strip()
        try:
            volume = int(raw)
        except ValueError:
            raise ValidationError(
                f"{path}: lesion_volume for {row['subject_id']!r} is not an "
                f"integer: {raw!r}"
            ) from None
        records.append(SubjectRecord(subject_id=row["subject_id"], lesion_volume=volume))
    if not records:
        raise ValidationError(f"{path}: no subject rows found")
    _check_unique_ids(records)
    return records


def write_fold_csv(fa: FoldAssignment, path: str | Path) -> None:
    """Write the assignment as CSV ``subject_id,fold``, sorted by subject."""
    with open(path, "w", newline="") as f:
        f.write("# format_version=1\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["subject_id", "fold"])
        for subject_id in sorted(fa.folds):
            writer.writerow([subject_id, fa.folds[subject_id]])
