"""Error-analysis toolkit for computational dating of ancient manuscripts.

Century-float date scoring, Error Time Window accuracy curves,
per-document error distributions, expert interval evaluation with
abstention substitution, inter-rater agreement indices, and a seeded
experiment harness with pluggable reference predictors.
"""

__version__ = "0.1.0"

from .model import (
    Century,
    DateInterval,
    DatedDocument,
    DatasetManifest,
    LineRecord,
    Violation,
    YearZeroError,
    century_to_year,
    interval_midpoint,
    validate_manifest,
    year_to_century,
)
from .metrics import (
    DocumentStats,
    EtwConfig,
    EtwResult,
    EtwSweep,
    etw_accuracy,
    etw_contains,
    etw_sweep,
    mae,
    mse,
    per_document_stats,
)
from .agreement import (
    AgreementReport,
    DegenerateKappaError,
    ExpertResponse,
    SubstitutionPolicy,
    TimeGrid,
    UndefinedCorrelationError,
    agreement_report,
    discretize_answer,
    expert_errors,
    expert_mae,
    fleiss_kappa,
    mean_pairwise_corr,
    pairwise_mae,
    pearson,
    spearman,
)
from .predictors import (
    FeatureVector,
    KnnPredictor,
    MeanPredictor,
    NotFittedError,
    Predictor,
    extract_features,
    otsu_threshold,
)
from .harness import (
    ConfigError,
    Dataset,
    ExperimentConfig,
    SplitSpec,
    parse_experiment_config,
    run_baseline,
    run_experiment,
    run_transfer,
    run_union,
    split,
    split_from_labels,
    subsample,
)
