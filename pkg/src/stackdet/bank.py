"""Detector-bank enrollment, dense cosine scoring, and M-Norm.

A detector is one enrolled blacklist speaker: the unit-length mean direction
of that speaker's length-normalized utterances.  Raw scores are cosines of
length-normalized trials against detector directions.  M-Norm standardizes
each detector's scores with the mean and population standard deviation of
its scores over a cohort of blacklist utterances.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .data import EmbeddingSet, ScoreMatrix, concatenate

ZERO_NORM = 1e-15
SIGMA_FLOOR = 1e-12
NORM_MODES = ("full", "shift", "scale", "none")

# Fixed scoring block size; thread count must never change the output bytes,
# so chunk boundaries cannot depend on it.
_CHUNK = 2048


def length_normalize(v) -> np.ndarray:
    """Scale a vector to unit Euclidean norm; rejects (near-)zero vectors."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError("expected a 1-D vector")
    if not np.isfinite(v).all():
        raise ValueError("vector contains non-finite values")
    n = float(np.linalg.norm(v))
    if n < ZERO_NORM:
        raise ValueError("cannot length-normalize a zero vector")
    return v / n


def _normalize_rows(mat: np.ndarray, ids: Sequence[str]) -> np.ndarray:
    norms = np.linalg.norm(mat, axis=1)
    bad = np.flatnonzero(norms < ZERO_NORM)
    if bad.size:
        raise ValueError(f"zero vector for utterance {ids[bad[0]]!r}")
    return mat / norms[:, None]


@dataclass(frozen=True)
class SpeakerModel:
    """One enrolled speaker: id plus unit-length direction."""

    speaker_id: str
    direction: np.ndarray


@dataclass(frozen=True, eq=False)
class MNormStats:
    """Per-detector cohort score mean/std (population variance) and cohort size."""

    mu: np.ndarray
    sigma: np.ndarray
    cohort_size: int

    def __post_init__(self) -> None:
        mu = np.ascontiguousarray(self.mu, dtype=np.float64)
        sigma = np.ascontiguousarray(self.sigma, dtype=np.float64)
        if mu.ndim != 1 or sigma.shape != mu.shape:
            raise ValueError("mu and sigma must be 1-D arrays of equal length")
        if not (np.isfinite(mu).all() and np.isfinite(sigma).all()):
            raise ValueError("non-finite normalization statistics")
        if (sigma <= 0).any():
            raise ValueError("sigma must be positive for every detector")
        if self.cohort_size < 1:
            raise ValueError("cohort_size must be positive")
        mu.flags.writeable = False
        sigma.flags.writeable = False
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    def __len__(self) -> int:
        return self.mu.shape[0]


@dataclass(frozen=True, eq=False)
class DetectorBank:
    """Ordered blacklist speaker models; row i of `directions` is detector i."""

    speaker_ids: tuple[str, ...]
    directions: np.ndarray  # (S, D), unit-norm rows
    mnorm: MNormStats | None = None

    def __post_init__(self) -> None:
        directions = np.ascontiguousarray(self.directions, dtype=np.float64)
        if directions.ndim != 2:
            raise ValueError("directions must be a 2-D array")
        s, _ = directions.shape
        if s < 1:
            raise ValueError("a detector bank needs at least one model")
        ids = tuple(str(i) for i in self.speaker_ids)
        if len(ids) != s:
            raise ValueError("speaker id count does not match model count")
        if len(set(ids)) != s:
            raise ValueError("duplicate speaker id in bank")
        if not np.isfinite(directions).all():
            raise ValueError("directions contain non-finite values")
        norms = np.linalg.norm(directions, axis=1)
        off = np.flatnonzero(np.abs(norms - 1.0) > 1e-12)
        if off.size:
            raise ValueError(
                f"model for speaker {ids[off[0]]!r} is not unit length"
            )
        if self.mnorm is not None and len(self.mnorm) != s:
            raise ValueError("normalization statistics do not match bank size")
        directions.flags.writeable = False
        object.__setattr__(self, "speaker_ids", ids)
        object.__setattr__(self, "directions", directions)

    @property
    def dimension(self) -> int:
        return self.directions.shape[1]

    def __len__(self) -> int:
        return self.directions.shape[0]

    @property
    def models(self) -> list[SpeakerModel]:
        return [
            SpeakerModel(spk, self.directions[i])
            for i, spk in enumerate(self.speaker_ids)
        ]

    def take(self, k: int) -> "DetectorBank":
        """Sub-bank of the first k detectors (normalization stats dropped)."""
        if not 1 <= k <= len(self):
            raise ValueError(f"cannot take {k} of {len(self)} detectors")
        return DetectorBank(self.speaker_ids[:k], self.directions[:k])

    def with_mnorm(self, stats: MNormStats) -> "DetectorBank":
        return replace(self, mnorm=stats)


def enroll(train: EmbeddingSet, augment: EmbeddingSet | None = None) -> DetectorBank:
    """Build one unit-direction model per labeled speaker.

    Utterances are length-normalized, averaged per speaker (pooled across
    train and augment), and the mean renormalized.  Model order is first
    appearance in the pooled utterance stream.
    """
    pooled = train if augment is None else concatenate([train, augment])
    if len(pooled) == 0:
        raise ValueError("no utterances to enroll")
    for utt, spk in zip(pooled.utterance_ids, pooled.speaker_ids):
        if spk is None:
            raise ValueError(f"utterance {utt!r} is unlabeled and cannot be enrolled")
    normalized = _normalize_rows(pooled.vectors, pooled.utterance_ids)
    groups: dict[str, list[int]] = {}
    for i, spk in enumerate(pooled.speaker_ids):
        groups.setdefault(spk, []).append(i)
    directions = np.empty((len(groups), pooled.dimension))
    for row, (spk, idx) in enumerate(groups.items()):
        mean = normalized[idx].mean(axis=0)
        norm = float(np.linalg.norm(mean))
        if norm < ZERO_NORM:
            raise ValueError(f"speaker {spk!r}: utterances cancel to a zero mean")
        directions[row] = mean / norm
    return DetectorBank(tuple(groups), directions)


def score_all(bank: DetectorBank, trials: EmbeddingSet, threads: int = 1) -> ScoreMatrix:
    """Cosine of every length-normalized trial against every detector.

    Work is split into fixed-size trial blocks merged by index, so the
    result is identical for any thread count.
    """
    if trials.dimension != bank.dimension:
        raise ValueError(
            f"dimension mismatch: trials {trials.dimension} vs bank {bank.dimension}"
        )
    probes = _normalize_rows(trials.vectors, trials.utterance_ids)
    out = np.empty((len(trials), len(bank)))
    dirs_t = bank.directions.T

    def run(span: tuple[int, int]) -> None:
        a, b = span
        out[a:b] = probes[a:b] @ dirs_t

    spans = [(a, min(a + _CHUNK, len(trials))) for a in range(0, len(trials), _CHUNK)]
    if threads <= 1 or len(spans) <= 1:
        for span in spans:
            run(span)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, spans))
    return ScoreMatrix(trials.utterance_ids, bank.speaker_ids, out)


def mnorm_stats_from_scores(matrix: ScoreMatrix) -> MNormStats:
    """Mean and population std of each detector's scores over a cohort matrix."""
    if matrix.n_trials < 1:
        raise ValueError("empty cohort")
    scores = matrix.scores
    mu = scores.mean(axis=0)
    sigma = np.sqrt(np.mean((scores - mu) ** 2, axis=0))
    low = np.flatnonzero(sigma < SIGMA_FLOOR)
    if low.size:
        raise ValueError(
            f"degenerate cohort: detector {matrix.detector_ids[low[0]]!r}"
            f" has no score spread ({low.size} detector(s) affected)"
        )
    return MNormStats(mu, sigma, matrix.n_trials)


def compute_mnorm_stats(
    bank: DetectorBank, cohort: EmbeddingSet, threads: int = 1
) -> MNormStats:
    """Score the blacklist cohort against the bank and standardize per detector.

    Every cohort utterance must be labeled with an enrolled speaker; the sum
    runs over all of them, including each detector's own utterances.
    """
    enrolled = set(bank.speaker_ids)
    for utt, spk in zip(cohort.utterance_ids, cohort.speaker_ids):
        if spk is None:
            raise ValueError(f"cohort utterance {utt!r} is unlabeled")
        if spk not in enrolled:
            raise ValueError(
                f"cohort utterance {utt!r} belongs to {spk!r}, not an enrolled speaker"
            )
    return mnorm_stats_from_scores(score_all(bank, cohort, threads=threads))


def apply_mnorm(
    matrix: ScoreMatrix, stats: MNormStats | None, mode: str = "full"
) -> ScoreMatrix:
    """Standardize each score column: (y - mu) / sigma, or a partial variant.

    Modes: ``full`` shifts and scales, ``shift`` only subtracts mu,
    ``scale`` only divides by sigma, ``none`` returns the scores unchanged.
    """
    if mode not in NORM_MODES:
        raise ValueError(f"normalization mode must be one of {NORM_MODES}")
    if mode == "none":
        return matrix
    if stats is None:
        raise ValueError(f"mode {mode!r} requires normalization statistics")
    if len(stats) != matrix.n_detectors:
        raise ValueError(
            f"size mismatch: {len(stats)} stats vs {matrix.n_detectors} detectors"
        )
    if mode == "full":
        out = (matrix.scores - stats.mu) / stats.sigma
    elif mode == "shift":
        out = matrix.scores - stats.mu
    else:
        out = matrix.scores / stats.sigma
    return ScoreMatrix(matrix.trial_ids, matrix.detector_ids, out)
