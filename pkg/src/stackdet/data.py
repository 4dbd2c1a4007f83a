"""Embedding sets, score matrices, partition manifests, and their file formats.

On-disk formats (all UTF-8, LF line endings):

* embedding CSV, headerless: ``utterance_id,speaker_id,v1,...,vD`` with ``-``
  in the speaker column marking an unlabeled utterance,
* score CSV: header row naming the columns (``utterance_id`` followed by the
  detector speaker ids), then one row per trial,
* manifest: ``key=value`` lines, one per manifest field.

Floats are written with shortest round-trip repr and parsed as binary64, so
a save followed by a load reproduces every value bit-exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

UNLABELED = "-"
PARTITION_NAMES = ("train", "dev", "test")

_MANIFEST_KEYS = (
    "partition",
    "blacklist_speakers",
    "background_speakers",
    "min_blacklist_utterances",
    "total_utterances",
)


class DataFormatError(ValueError):
    """A file violates the frozen CSV or manifest format."""


def _fmt(x: float) -> str:
    """Shortest decimal string that parses back to the same binary64."""
    return repr(float(x))


@dataclass(frozen=True)
class Embedding:
    """One utterance: an id, an optional speaker label, and its vector."""

    utterance_id: str
    speaker_id: str | None
    vector: np.ndarray


class EmbeddingSet:
    """Ordered, immutable collection of same-dimension embeddings.

    Iteration follows construction (file) order; vectors are held as a
    read-only (N, D) float64 array, safe to share across workers.
    """

    __slots__ = ("_utterance_ids", "_speaker_ids", "_vectors")

    def __init__(
        self,
        utterance_ids: Sequence[str],
        speaker_ids: Sequence[str | None],
        vectors,
    ) -> None:
        vectors = np.ascontiguousarray(vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise ValueError("vectors must be a 2-D (utterances x dimension) array")
        n, d = vectors.shape
        if d < 1:
            raise ValueError("embedding dimension must be >= 1")
        if len(utterance_ids) != n or len(speaker_ids) != n:
            raise ValueError("id lists do not match the number of vector rows")
        if n and not np.isfinite(vectors).all():
            raise ValueError("vectors contain non-finite values")
        utts = tuple(str(u) for u in utterance_ids)
        if any(not u for u in utts):
            raise ValueError("empty utterance id")
        if len(set(utts)) != n:
            seen: set[str] = set()
            for u in utts:
                if u in seen:
                    raise ValueError(f"duplicate utterance id {u!r}")
                seen.add(u)
        vectors.flags.writeable = False
        self._utterance_ids = utts
        self._speaker_ids = tuple(
            None if s is None else str(s) for s in speaker_ids
        )
        self._vectors = vectors

    @property
    def dimension(self) -> int:
        return self._vectors.shape[1]

    @property
    def utterance_ids(self) -> tuple[str, ...]:
        return self._utterance_ids

    @property
    def speaker_ids(self) -> tuple[str | None, ...]:
        return self._speaker_ids

    @property
    def vectors(self) -> np.ndarray:
        return self._vectors

    def __len__(self) -> int:
        return self._vectors.shape[0]

    def __getitem__(self, i: int) -> Embedding:
        return Embedding(self._utterance_ids[i], self._speaker_ids[i], self._vectors[i])

    def __iter__(self) -> Iterator[Embedding]:
        for i in range(len(self)):
            yield self[i]

    def subset(self, indices) -> "EmbeddingSet":
        """New set holding the given rows, in the given order."""
        idx = np.asarray(indices)
        if idx.dtype == bool:
            idx = np.flatnonzero(idx)
        return EmbeddingSet(
            [self._utterance_ids[i] for i in idx],
            [self._speaker_ids[i] for i in idx],
            self._vectors[idx],
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingSet):
            return NotImplemented
        return (
            self._utterance_ids == other._utterance_ids
            and self._speaker_ids == other._speaker_ids
            and self._vectors.shape == other._vectors.shape
            and bool(np.array_equal(self._vectors, other._vectors))
        )

    def __repr__(self) -> str:
        return f"EmbeddingSet(n={len(self)}, dimension={self.dimension})"


def concatenate(sets: Sequence[EmbeddingSet]) -> EmbeddingSet:
    """Stack sets in order; dimensions must agree and ids stay unique."""
    sets = [s for s in sets if s is not None]
    if not sets:
        raise ValueError("nothing to concatenate")
    d = sets[0].dimension
    for s in sets[1:]:
        if s.dimension != d:
            raise ValueError(f"dimension mismatch: {s.dimension} vs {d}")
    utts: list[str] = []
    spks: list[str | None] = []
    for s in sets:
        utts.extend(s.utterance_ids)
        spks.extend(s.speaker_ids)
    return EmbeddingSet(utts, spks, np.vstack([s.vectors for s in sets]))


def load_embeddings(path, expected_dimension: int | None = None) -> EmbeddingSet:
    """Parse an embedding CSV.

    The dimension is inferred from the first row unless
    ``expected_dimension`` is given.  Format errors carry the 1-based row
    number of the offending line.
    """
    path = Path(path)
    utts: list[str] = []
    spks: list[str | None] = []
    rows: list[list[float]] = []
    dim = expected_dimension
    seen: dict[str, int] = {}
    with path.open("r", encoding="utf-8", newline="") as f:
        for rownum, rec in enumerate(csv.reader(f), start=1):
            if len(rec) < 3:
                raise DataFormatError(
                    f"{path}: row {rownum}: expected utterance_id,speaker_id,v1,..."
                )
            utt, spk, *vals = rec
            if not utt:
                raise DataFormatError(f"{path}: row {rownum}: empty utterance id")
            if utt in seen:
                raise DataFormatError(
                    f"{path}: row {rownum}: duplicate utterance id {utt!r}"
                    f" (first seen at row {seen[utt]})"
                )
            seen[utt] = rownum
            if not spk:
                raise DataFormatError(
                    f"{path}: row {rownum}: empty speaker field (use '-' for unlabeled)"
                )
            if dim is None:
                dim = len(vals)
            elif len(vals) != dim:
                raise DataFormatError(
                    f"{path}: row {rownum}: {len(vals)} values, expected {dim}"
                )
            try:
                vec = [float(v) for v in vals]
            except ValueError:
                raise DataFormatError(
                    f"{path}: row {rownum}: unparseable float value"
                ) from None
            if not all(math.isfinite(v) for v in vec):
                raise DataFormatError(f"{path}: row {rownum}: non-finite value")
            utts.append(utt)
            spks.append(None if spk == UNLABELED else spk)
            rows.append(vec)
    if not utts:
        raise DataFormatError(f"{path}: empty embedding file")
    return EmbeddingSet(utts, spks, np.array(rows, dtype=np.float64))


def save_embeddings(embeddings: EmbeddingSet, path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        for utt, spk, row in zip(
            embeddings.utterance_ids, embeddings.speaker_ids, embeddings.vectors
        ):
            w.writerow([utt, UNLABELED if spk is None else spk] + [_fmt(v) for v in row])


class ScoreMatrix:
    """Trials x detectors score table with aligned id lists."""

    __slots__ = ("_trial_ids", "_detector_ids", "_scores")

    def __init__(self, trial_ids: Sequence[str], detector_ids: Sequence[str], scores) -> None:
        scores = np.ascontiguousarray(scores, dtype=np.float64)
        if scores.ndim != 2:
            raise ValueError("scores must be a 2-D (trials x detectors) array")
        t, s = scores.shape
        trials = tuple(str(u) for u in trial_ids)
        dets = tuple(str(u) for u in detector_ids)
        if len(trials) != t or len(dets) != s:
            raise ValueError("id lists do not match the score matrix shape")
        if len(set(trials)) != t:
            raise ValueError("duplicate trial id")
        if len(set(dets)) != s:
            raise ValueError("duplicate detector id")
        if scores.size and not np.isfinite(scores).all():
            raise ValueError("scores contain non-finite values")
        scores.flags.writeable = False
        self._trial_ids = trials
        self._detector_ids = dets
        self._scores = scores

    @property
    def trial_ids(self) -> tuple[str, ...]:
        return self._trial_ids

    @property
    def detector_ids(self) -> tuple[str, ...]:
        return self._detector_ids

    @property
    def scores(self) -> np.ndarray:
        return self._scores

    @property
    def n_trials(self) -> int:
        return self._scores.shape[0]

    @property
    def n_detectors(self) -> int:
        return self._scores.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ScoreMatrix):
            return NotImplemented
        return (
            self._trial_ids == other._trial_ids
            and self._detector_ids == other._detector_ids
            and self._scores.shape == other._scores.shape
            and bool(np.array_equal(self._scores, other._scores))
        )

    def __repr__(self) -> str:
        return f"ScoreMatrix(trials={self.n_trials}, detectors={self.n_detectors})"


def save_scores(matrix: ScoreMatrix, path) -> None:
    """Write a score CSV; values must be finite (enforced on construction)."""
    if matrix.scores.size and not np.isfinite(matrix.scores).all():
        raise ValueError("scores contain non-finite values")
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["utterance_id", *matrix.detector_ids])
        for utt, row in zip(matrix.trial_ids, matrix.scores):
            w.writerow([utt] + [_fmt(v) for v in row])


def load_scores(path) -> ScoreMatrix:
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty score file") from None
        if not header or header[0] != "utterance_id":
            raise DataFormatError(f"{path}: score header must start with 'utterance_id'")
        detector_ids = header[1:]
        if not detector_ids:
            raise DataFormatError(f"{path}: score header names no detectors")
        trials: list[str] = []
        rows: list[list[float]] = []
        for rownum, rec in enumerate(reader, start=2):
            if len(rec) != len(header):
                raise DataFormatError(
                    f"{path}: row {rownum}: {len(rec)} fields, expected {len(header)}"
                )
            try:
                vec = [float(v) for v in rec[1:]]
            except ValueError:
                raise DataFormatError(
                    f"{path}: row {rownum}: unparseable float value"
                ) from None
            if not all(math.isfinite(v) for v in vec):
                raise DataFormatError(f"{path}: row {rownum}: non-finite value")
            trials.append(rec[0])
            rows.append(vec)
    scores = (
        np.array(rows, dtype=np.float64)
        if rows
        else np.zeros((0, len(detector_ids)))
    )
    return ScoreMatrix(trials, detector_ids, scores)


@dataclass(frozen=True)
class PartitionManifest:
    """Expected composition of one data partition."""

    partition_name: str
    blacklist_speaker_count: int
    background_speaker_count: int
    min_utterances_per_blacklist_speaker: int
    total_utterances: int

    def __post_init__(self) -> None:
        if self.partition_name not in PARTITION_NAMES:
            raise ValueError(f"partition_name must be one of {PARTITION_NAMES}")
        if self.blacklist_speaker_count < 0 or self.background_speaker_count < 0:
            raise ValueError("speaker counts must be non-negative")
        if self.min_utterances_per_blacklist_speaker < 1:
            raise ValueError("min_utterances_per_blacklist_speaker must be positive")
        if self.total_utterances < 0:
            raise ValueError("total_utterances must be non-negative")


def save_manifest(manifest: PartitionManifest, path) -> None:
    values = (
        manifest.partition_name,
        manifest.blacklist_speaker_count,
        manifest.background_speaker_count,
        manifest.min_utterances_per_blacklist_speaker,
        manifest.total_utterances,
    )
    with Path(path).open("w", encoding="utf-8", newline="") as f:
        for key, value in zip(_MANIFEST_KEYS, values):
            f.write(f"{key}={value}\n")


def load_manifest(path) -> PartitionManifest:
    path = Path(path)
    fields: dict[str, str] = {}
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise DataFormatError(f"{path}: line {lineno}: expected key=value")
            if key in fields:
                raise DataFormatError(f"{path}: line {lineno}: duplicate key {key!r}")
            fields[key] = value
    missing = [k for k in _MANIFEST_KEYS if k not in fields]
    if missing:
        raise DataFormatError(f"{path}: missing manifest keys {missing}")
    unknown = [k for k in fields if k not in _MANIFEST_KEYS]
    if unknown:
        raise DataFormatError(f"{path}: unknown manifest keys {unknown}")
    try:
        counts = [int(fields[k]) for k in _MANIFEST_KEYS[1:]]
    except ValueError:
        raise DataFormatError(f"{path}: manifest counts must be integers") from None
    return PartitionManifest(fields["partition"], *counts)


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of a partition check; violations are data, not failures."""

    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_partition(
    embeddings: EmbeddingSet,
    manifest: PartitionManifest,
    reference_blacklist=None,
    reference_background=None,
) -> ValidationReport:
    """Check a partition's composition against its manifest.

    Labeled speakers count as blacklist speakers unless a reference set says
    otherwise; each unlabeled utterance counts as its own anonymous
    background speaker.  With ``reference_blacklist`` given, labeled speakers
    outside it are background speakers in the train partition and subset
    violations in dev/test.  ``reference_background`` lists background
    speaker ids already used by other partitions; any of them reappearing
    here (labeled) is a disjointness violation.

    The report lists one entry per violated constraint, in a deterministic
    order; an empty list means the partition passes.
    """
    ref_bl = None if reference_blacklist is None else set(reference_blacklist)
    ref_bg = set() if reference_background is None else set(reference_background)

    labeled: dict[str, int] = {}
    unlabeled = 0
    for spk in embeddings.speaker_ids:
        if spk is None:
            unlabeled += 1
        else:
            labeled[spk] = labeled.get(spk, 0) + 1

    violations: list[str] = []
    blacklist: dict[str, int] = {}
    background_speakers = unlabeled
    for spk, count in labeled.items():
        if spk in ref_bg:
            background_speakers += 1
            violations.append(
                f"background speaker {spk!r} already appears in another partition"
            )
        elif ref_bl is None or spk in ref_bl:
            blacklist[spk] = count
        elif manifest.partition_name == "train":
            background_speakers += 1
        else:
            blacklist[spk] = count
            violations.append(
                f"labeled speaker {spk!r} is not in the reference blacklist"
            )

    if len(blacklist) != manifest.blacklist_speaker_count:
        violations.append(
            f"blacklist speaker count {len(blacklist)}"
            f" != manifest {manifest.blacklist_speaker_count}"
        )
    if background_speakers != manifest.background_speaker_count:
        violations.append(
            f"background speaker count {background_speakers}"
            f" != manifest {manifest.background_speaker_count}"
        )
    if len(embeddings) != manifest.total_utterances:
        violations.append(
            f"total utterances {len(embeddings)} != manifest {manifest.total_utterances}"
        )
    minimum = manifest.min_utterances_per_blacklist_speaker
    for spk, count in blacklist.items():
        if count < minimum:
            violations.append(
                f"blacklist speaker {spk!r} has {count} utterances, needs >= {minimum}"
            )
    return ValidationReport(tuple(violations))
