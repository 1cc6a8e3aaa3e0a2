"""Learned reference/candidate quality scoring for text generation.

Neural features (semantic similarity, inference probabilities,
perplexities) feed a small trained aggregator; the raw output is
calibrated against the reference's self-score and clamped to [0, 1].
"""

from .aggregator import (
    AdamState,
    LinearParams,
    MlpParams,
    StandardizationStats,
    TrainConfig,
    TrainedAggregator,
    adam_step,
    linreg_fit,
    load_model,
    mlp_backward,
    mlp_forward,
    save_model,
    train,
    training_mse,
)
from .baselines import lcs_length, rouge_l, sentence_bleu, tokenize
from .cache import FeatureRecord, FeatureStore, pair_digest
from .core import (
    EvalReport,
    FeatureGroup,
    FeatureMask,
    FeatureVector,
    JudgedPair,
    RankedPair,
    ReportEntry,
    SentencePair,
    project,
    validate_features,
)
from .errors import (
    DataError,
    ExtractionError,
    MetricForgeError,
    NumericError,
)
from .ingestion import (
    CanonicalDaRow,
    CaptionJudgment,
    Split,
    build_split,
    parse_canonical_tsv,
    parse_flickr_judgments,
    rows_to_da_groups,
    write_canonical_tsv,
)
from .pipeline import (
    BatchScores,
    ExtractorClient,
    ExtractorEndpoint,
    ScoreResult,
    calibrate,
    extract_features,
    nubia_score,
    run_ablation,
    score_batch,
)
from .stats import (
    DaEntry,
    DaSegmentGroup,
    ScoredSegment,
    da_to_relative_ranking,
    evaluate_da,
    evaluate_darr,
    evaluate_tau_b,
    kendall_tau_b,
    kendall_wmt,
    pearson,
)

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "BatchScores",
    "CanonicalDaRow",
    "CaptionJudgment",
    "DaEntry",
    "DaSegmentGroup",
    "DataError",
    "EvalReport",
    "ExtractionError",
    "ExtractorClient",
    "ExtractorEndpoint",
    "FeatureGroup",
    "FeatureMask",
    "FeatureRecord",
    "FeatureStore",
    "FeatureVector",
    "JudgedPair",
    "LinearParams",
    "MetricForgeError",
    "MlpParams",
    "NumericError",
    "RankedPair",
    "ReportEntry",
    "ScoreResult",
    "ScoredSegment",
    "SentencePair",
    "Split",
    "StandardizationStats",
    "TrainConfig",
    "TrainedAggregator",
    "adam_step",
    "build_split",
    "calibrate",
    "da_to_relative_ranking",
    "evaluate_da",
    "evaluate_darr",
    "evaluate_tau_b",
    "extract_features",
    "kendall_tau_b",
    "kendall_wmt",
    "lcs_length",
    "linreg_fit",
    "load_model",
    "mlp_backward",
    "mlp_forward",
    "nubia_score",
    "parse_canonical_tsv",
    "parse_flickr_judgments",
    "pair_digest",
    "pearson",
    "project",
    "rouge_l",
    "rows_to_da_groups",
    "run_ablation",
    "save_model",
    "score_batch",
    "sentence_bleu",
    "tokenize",
    "train",
    "training_mse",
    "validate_features",
    "write_canonical_tsv",
]
