"""Multi-target (blacklist) speaker detection on fixed-length embeddings.

Enrollment of a detector bank from labeled utterances, dense cosine
scoring, M-Norm score normalization, Top-S / Top-1 stack-detector sweeps
(EER, DET), and a synthetic-population experiment measuring how performance
degrades as the blacklist grows.
"""

from .bank import (
    DetectorBank,
    MNormStats,
    SpeakerModel,
    apply_mnorm,
    compute_mnorm_stats,
    enroll,
    length_normalize,
    mnorm_stats_from_scores,
    score_all,
)
from .data import (
    DataFormatError,
    Embedding,
    EmbeddingSet,
    PartitionManifest,
    ScoreMatrix,
    ValidationReport,
    concatenate,
    load_embeddings,
    load_manifest,
    load_scores,
    save_embeddings,
    save_manifest,
    save_scores,
    validate_partition,
)
from .metrics import (
    DetectorReport,
    OperatingPoint,
    StackScore,
    TrialLabel,
    det_points,
    eer_from_points,
    save_det_points,
    stack_reduce,
    sweep_both,
    sweep_top_1,
    sweep_top_s,
)
from .synth import (
    PartitionSpec,
    Population,
    PopulationConfig,
    SizeSweepResult,
    default_partition_specs,
    derive_replicate_seed,
    generate_population,
    manifest_for,
    run_size_sweep,
    save_size_sweep,
)

__version__ = "0.1.0"
