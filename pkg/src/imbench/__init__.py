"""Benchmark engine for deep imbalanced binary classification on tabular data.

Hand-rolled dense networks (ERM and group-DRO objectives), classical
imbalance treatments, threshold and curve metrics, nonparametric method
comparison, and a reproducible CLI experiment harness.
"""
from .data import (
    ClassCounts,
    Dataset,
    DatasetProfile,
    FoldSplit,
    imbalance_ratio,
    load_csv,
    load_keel_dat,
    profile_dataset,
    silhouette_coefficient,
    standardize,
    stratified_kfold,
    train_val_split,
)
from .harness import (
    ExperimentConfig,
    ExperimentRecord,
    RunSummary,
    TuneReport,
    aggregate,
    batch_size_rule,
    derive_seed,
    load_dataset,
    load_records,
    run_experiment,
    stats_report,
    tune_architecture,
)
from .imbalance import (
    METHODS,
    apply_method,
    cost_weights,
    random_oversample,
    random_undersample,
    rus_ros_hybrid,
)
from .metrics import (
    METRIC_NAMES,
    ConfusionCounts,
    EvalScores,
    confusion_at_threshold,
    evaluate_scores,
    f_beta,
    g_mean,
    pr_auc,
    precision,
    recall,
    roc_auc,
)
from .nn import AdamState, MlpModel, adam_step, cross_entropy, softmax, xavier_init
from .objectives import (
    OBJECTIVES,
    TrainConfig,
    TrainReport,
    erm_batch_loss,
    erm_step,
    gdro_adjusted_class_losses,
    gdro_step,
    train,
    validation_error,
)
from .stats import (
    FriedmanResult,
    PairwiseResult,
    RankMatrix,
    ScoreTable,
    WilcoxonResult,
    cd_diagram_svg,
    chi2_sf,
    friedman_test,
    holm_correction,
    mean_ranks,
    pairwise_wilcoxon_holm,
    regularized_gamma_q,
    wilcoxon_signed_rank,
)

__version__ = "0.1.0"
