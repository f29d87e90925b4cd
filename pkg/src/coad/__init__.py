"""Coincidence-based unsupervised anomaly detection.

Two detectors watch two slices of the same system; anomalies show up in
both at once. The package scores detector pairs without labels via an
unsupervised F-beta built from their agreement statistics, selects
two-threshold detectors by grid scan, trains network pairs end to end
with hand-written backpropagation, and verifies the metric's structural
guarantees on exactly computable instances.
"""

__version__ = "0.1.0"

from .categorical import (
    FrontierPoint,
    ScanResult,
    ThresholdPair,
    apply_thresholds,
    midpoint_taus,
    pr_frontier,
    scan_thresholds,
)
from .continuous import (
    MlpPair,
    TrainConfig,
    TrainHistory,
    forward,
    init_mlp_pair,
    load_mlp_pair,
    loss_and_grads,
    save_mlp_pair,
    train,
)
from .data import PairedDataset, from_scored, read_dataset_csv, write_dataset_csv
from .errors import (
    CoadError,
    ConstraintViolation,
    DegenerateRates,
    NoFeasiblePair,
    NoFlip,
    ScenarioInvalid,
    TrainingDiverged,
)
from .metric import (
    INFINITY,
    MetricParams,
    RateSummary,
    compute_rates,
    f_beta_hat,
    fbeta_hat_moments,
    supervised_f_beta,
)
from .synth import (
    MnistToyModel,
    OverlapScenario,
    ScoredDataset,
    enumerate_labelings,
    gen_gaussian_outliers,
    gen_overlap_scenario,
    sweep_labeling_regimes,
)
from .theory import (
    CategoricalSolution,
    InnerSolution,
    beta_crit,
    compare_solutions,
    mu_sq_star_curve,
    optimal_pq_given_ps,
    verify_bounds,
)
