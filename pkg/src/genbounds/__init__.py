"""Partial-identification bounds for generalizing treatment effects, with
propensity-score stratification, overlap diagnostics, and the simulation
designs relating overlap and precision gain."""

__version__ = "0.1.0"

from .bounds import (
    BoundsEstimate,
    BoundsError,
    RangePolicy,
    StratumBound,
    estimate_sate,
    precision_gain,
    stratified_bounds,
    worst_case_bounds,
)
from .frame import (
    FrameError,
    OutcomeRange,
    Standardization,
    StudyFrame,
    UnitRecord,
    load_frame,
    standardize_covariates,
    validate_frame,
    write_frame,
)
from .overlap import OverlapStat, estimate_overlap, overlap_from_scores, percentile
from .report import (
    AnalysisReport,
    GridConfigError,
    load_grid,
    run_analysis,
    write_sweep_outputs,
)
from .propensity import (
    LogisticModel,
    RankDeficiencyError,
    ScoreSet,
    SeparationError,
    fit_logistic,
    predict_scores,
)
from .simulate import (
    RepRecord,
    ScenarioConfig,
    SimulationError,
    SweepResult,
    SyntheticFrame,
    calibrate_noise_for_r2,
    calibrate_selection_intercept,
    generate_population,
    r_squared,
    run_replication,
    run_sweep,
    true_pate,
)
from .stratify import (
    StrataError,
    StratumAssignment,
    assign_equal_strata,
    effective_strata_count,
    stratum_summaries,
)
