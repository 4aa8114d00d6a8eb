"""Monte Carlo designs relating overlap, covariate predictiveness, and
precision gain.

Two scenarios over six covariates X1..X6 (X1-X4 standard normal, X5 a
+/-1 coin, X6 uniform on {-1, 0, 1}).  Selection is logistic on the
selection covariates (coefficient 0.5 each) with an intercept calibrated
to the target sampling fraction.  The control outcome is a linear signal
plus noise sized to hit a target R-squared; the treatment effect is
0.5 + 0.5 X1, so selection and effect heterogeneity share X1 and the
sample effect differs from the population effect.  Potential outcomes are
clipped to a declared symmetric range so the bounding premise holds by
construction.

Everything is a pure function of (config, seed): per-replication RNG
streams derive from the design point and replication index, so results do
not depend on execution order or worker count.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .bounds import (
    BoundsEstimate,
    RangePolicy,
    estimate_sate,
    precision_gain,
    stratified_bounds,
    worst_case_bounds,
)
from .frame import OutcomeRange, StudyFrame
from .overlap import estimate_overlap
from .propensity import fit_logistic, predict_scores
from .stratify import assign_equal_strata, effective_strata_count

N_COVARIATES = 6
COVARIATE_NAMES = tuple(f"X{i}" for i in range(1, 7))
# Var(X_i) for the fixed covariate distributions
COVARIATE_VARIANCES = (1.0, 1.0, 1.0, 1.0, 1.0, 2.0 / 3.0)
SELECTION_COEF = 0.5
CALIBRATION_DRAWS = 1_000_000
CALIBRATION_SEED = 20240517
CALIBRATION_TOL = 1e-4
DEFAULT_K_MAX = 5


class SimulationError(RuntimeError):
    """A generated population cannot support the analysis pipeline."""


def _default_outcome_covariates(scenario: int) -> tuple[int, ...]:
    return (1, 2, 3) if scenario == 1 else (4, 5, 6)


def _default_propensity_subset(scenario: int) -> tuple[int, ...]:
    # the pairs used for the sample-size sweeps
    return (1, 2) if scenario == 1 else (4, 5)


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation design point.  Covariate indices are 1-based (X1..X6)."""

    scenario: int = 1
    N: int = 20_000
    n_frac: float = 0.05
    selection_covariates: tuple[int, ...] = (1, 2, 3)
    outcome_covariates: Optional[tuple[int, ...]] = None
    alpha: tuple[float, ...] = (2.0, 2.0, 0.1, 0.1, 0.1, 0.1)
    target_r2: float = 0.9
    propensity_subset: Optional[tuple[int, ...]] = None
    tau0: float = 0.5
    tau1: float = 0.5
    reps: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.scenario not in (1, 2):
            raise ValueError(f"scenario must be 1 or 2, got {self.scenario}")
        object.__setattr__(
            self, "selection_covariates", tuple(int(i) for i in self.selection_covariates)
        )
        out = self.outcome_covariates
        out = _default_outcome_covariates(self.scenario) if out is None else tuple(
            int(i) for i in out
        )
        object.__setattr__(self, "outcome_covariates", out)
        sub = self.propensity_subset
        sub = _default_propensity_subset(self.scenario) if sub is None else tuple(
            int(i) for i in sub
        )
        object.__setattr__(self, "propensity_subset", sub)
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        for name in ("selection_covariates", "outcome_covariates", "propensity_subset"):
            idx = getattr(self, name)
            if not idx or any(i < 1 or i > N_COVARIATES for i in idx):
                raise ValueError(f"{name} must be a nonempty subset of 1..6, got {idx}")
        if len(self.alpha) != N_COVARIATES:
            raise ValueError("alpha must list six coefficients")
        if not 0.0 < self.n_frac < 1.0:
            raise ValueError(f"n_frac={self.n_frac} outside (0, 1)")
        if not 0.0 < self.target_r2 < 1.0:
            raise ValueError(f"target_r2={self.target_r2} outside (0, 1)")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.N < 4:
            raise ValueError("N too small")

    @property
    def q(self) -> int:
        return len(self.propensity_subset)

    def design_key(self) -> tuple:
        """Everything that defines the design point, excluding seed and reps."""
        return (
            self.scenario,
            self.N,
            self.n_frac,
            self.selection_covariates,
            self.outcome_covariates,
            self.alpha,
            self.target_r2,
            self.propensity_subset,
            self.tau0,
            self.tau1,
        )

    def to_json_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "N": self.N,
            "n_frac": self.n_frac,
            "selection_covariates": list(self.selection_covariates),
            "outcome_covariates": list(self.outcome_covariates),
            "alpha": list(self.alpha),
            "target_r2": self.target_r2,
            "propensity_subset": list(self.propensity_subset),
            "tau0": self.tau0,
            "tau1": self.tau1,
            "reps": self.reps,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class SyntheticFrame:
    """A StudyFrame plus the generating ground truth per unit."""

    frame: StudyFrame
    y1: np.ndarray
    y0: np.ndarray
    selection_prob: np.ndarray


def _design_digest(config: ScenarioConfig) -> int:
    payload = json.dumps(config.design_key(), sort_keys=False).encode()
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "big")


def _rep_rng(config: ScenarioConfig, rep_index: int) -> np.random.Generator:
    # splittable stream: identical for a (seed, design point, rep) triple
    # no matter where or in which order the replication runs
    seq = np.random.SeedSequence([config.seed, _design_digest(config), rep_index])
    return np.random.default_rng(seq)


@lru_cache(maxsize=None)
def _calibration_draws() -> np.ndarray:
    rng = np.random.default_rng(CALIBRATION_SEED)
    x = np.empty((CALIBRATION_DRAWS, N_COVARIATES))
    x[:, :4] = rng.standard_normal((CALIBRATION_DRAWS, 4))
    x[:, 4] = rng.integers(0, 2, CALIBRATION_DRAWS) * 2 - 1
    x[:, 5] = rng.integers(0, 3, CALIBRATION_DRAWS) - 1
    return x


def _sigmoid(eta: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(eta, -700, 700)))


@lru_cache(maxsize=None)
def _calibrated_intercept(selection_covariates: tuple[int, ...], n_frac: float) -> float:
    combo = SELECTION_COEF * _calibration_draws()[:, [i - 1 for i in selection_covariates]].sum(axis=1)

    def realized(gamma0: float) -> float:
        return float(_sigmoid(gamma0 + combo).mean())

    lo, hi = -20.0, 20.0
    f_lo, f_hi = realized(lo), realized(hi)
    if not f_lo <= n_frac <= f_hi:
        raise SimulationError(
            f"target sampling fraction {n_frac} outside achievable "
            f"range [{f_lo:.3g}, {f_hi:.3g}]"
        )
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        f_mid = realized(mid)
        if abs(f_mid - n_frac) <= CALIBRATION_TOL or hi - lo < 1e-12:
            return mid
        if f_mid < n_frac:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def calibrate_selection_intercept(config: ScenarioConfig) -> float:
    """Intercept making the expected sampling fraction equal config.n_frac
    (Monte Carlo expectation over a large fixed-seed covariate draw)."""
    return _calibrated_intercept(config.selection_covariates, config.n_frac)


def signal_variance(config: ScenarioConfig) -> float:
    """Analytic variance of the outcome signal under the known covariate laws."""
    return sum(
        config.alpha[i - 1] ** 2 * COVARIATE_VARIANCES[i - 1]
        for i in config.outcome_covariates
    )


def calibrate_noise_for_r2(config: ScenarioConfig) -> float:
    """Noise variance giving the outcome model its target R-squared."""
    if not 0.0 < config.target_r2 < 1.0:
        raise SimulationError(f"target_r2={config.target_r2} outside (0, 1)")
    return signal_variance(config) * (1.0 - config.target_r2) / config.target_r2


def outcome_bound(config: ScenarioConfig) -> float:
    """Half-width of the declared symmetric outcome range."""
    return 4.0 * float(np.sqrt(signal_variance(config))) + abs(config.tau0) + 4.0


def generate_population(config: ScenarioConfig, rep_index: int) -> SyntheticFrame:
    """Draw one population with hidden potential outcomes and true selection
    probabilities.  Bit-identical for a repeated (config, rep_index)."""
    rng = _rep_rng(config, rep_index)
    N = config.N
    x = np.empty((N, N_COVARIATES))
    x[:, :4] = rng.standard_normal((N, 4))
    x[:, 4] = rng.integers(0, 2, N) * 2 - 1
    x[:, 5] = rng.integers(0, 3, N) - 1

    gamma0 = calibrate_selection_intercept(config)
    sel_idx = [i - 1 for i in config.selection_covariates]
    selection_prob = _sigmoid(gamma0 + SELECTION_COEF * x[:, sel_idx].sum(axis=1))
    z = (rng.random(N) < selection_prob).astype(np.int64)

    out_idx = [i - 1 for i in config.outcome_covariates]
    signal = x[:, out_idx] @ np.array([config.alpha[i] for i in out_idx])
    noise = rng.standard_normal(N) * np.sqrt(calibrate_noise_for_r2(config))
    bound = outcome_bound(config)
    y0 = np.clip(signal + noise, -bound, bound)
    y1 = np.clip(signal + noise + config.tau0 + config.tau1 * x[:, 0], -bound, bound)

    n = int(z.sum())
    if n == 0 or n == N:
        raise SimulationError(f"degenerate draw: n={n} of N={N}")
    w = np.full(N, np.nan)
    w[z == 1] = rng.integers(0, 2, n).astype(float)
    if not ((w == 1).any() and (w == 0).any()):
        raise SimulationError("sample lacks a treatment arm")
    y = np.full(N, np.nan)
    sampled = z == 1
    y[sampled] = np.where(w[sampled] == 1, y1[sampled], y0[sampled])

    frame = StudyFrame(
        ids=tuple(f"u{i:07d}" for i in range(N)),
        z=z,
        w=w,
        y=y,
        x=x,
        covariate_names=COVARIATE_NAMES,
    )
    return SyntheticFrame(frame=frame, y1=y1, y0=y0, selection_prob=selection_prob)


def true_pate(synthetic: SyntheticFrame) -> float:
    """Oracle population effect: mean of y1 - y0 over all N units."""
    if synthetic.y1 is None or synthetic.y0 is None:
        raise SimulationError("frame lacks ground truth")
    return float(np.mean(synthetic.y1 - synthetic.y0))


def r_squared(frame: StudyFrame, covariate_subset: Sequence[int]) -> float:
    """R-squared of observed outcomes on subset covariates plus the treatment
    indicator, over sampled units only (0-based indices)."""
    sampled = frame.z == 1
    y = frame.y[sampled]
    cols = list(covariate_subset)
    design = np.column_stack(
        [np.ones(y.size), frame.x[np.ix_(sampled, cols)], frame.w[sampled]]
    )
    if y.size < design.shape[1] + 2:
        raise SimulationError("too few sampled units for the outcome regression")
    ss_total = float(np.sum((y - y.mean()) ** 2))
    if ss_total == 0.0:
        return 0.0
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < design.shape[1]:
        raise SimulationError("rank-deficient outcome regression design")
    ss_resid = float(np.sum((y - design @ coef) ** 2))
    return 1.0 - ss_resid / ss_total


@dataclass(frozen=True)
class RepRecord:
    """Metrics from a single replication."""

    rep_index: int
    omega: float
    gain: float
    r2: float
    n_over_N: float
    k: int
    unstratified: tuple[float, float]
    stratified: tuple[float, float]
    pate: float
    sate: float
    covers_unstratified: bool
    covers_stratified: bool


def run_replication(config: ScenarioConfig, rep_index: int) -> RepRecord:
    """Generate a population, run the full analyst pipeline, and score it
    against the oracle effect."""
    try:
        synthetic = generate_population(config, rep_index)
        frame = synthetic.frame
        model = fit_logistic(frame, [i - 1 for i in config.propensity_subset])
        scores = predict_scores(model, frame)
        overlap = estimate_overlap(scores)
        sate = estimate_sate(frame)
        bound = outcome_bound(config)
        outcome_range = OutcomeRange(-bound, bound)
        unstrat = worst_case_bounds(sate, frame.n, frame.N, outcome_range)
        k = effective_strata_count(scores, DEFAULT_K_MAX)
        assignment = assign_equal_strata(scores, k)
        strat = stratified_bounds(
            frame, assignment, outcome_range, RangePolicy.STRATUM_EMPIRICAL
        )
        gain = precision_gain(unstrat, strat)
        r2 = r_squared(frame, [i - 1 for i in config.outcome_covariates])
        pate = true_pate(synthetic)
    except Exception as exc:
        raise SimulationError(f"replication {rep_index}: {exc}") from exc
    return RepRecord(
        rep_index=rep_index,
        omega=overlap.omega,
        gain=gain,
        r2=r2,
        n_over_N=frame.n / frame.N,
        k=k,
        unstratified=(unstrat.lower, unstrat.upper),
        stratified=(strat.lower, strat.upper),
        pate=pate,
        sate=sate,
        covers_unstratified=unstrat.lower <= pate <= unstrat.upper,
        covers_stratified=strat.lower <= pate <= strat.upper,
    )


_METRICS = ("omega", "gain", "r2", "n_over_N", "k")


@dataclass(frozen=True)
class DesignPointResult:
    config: ScenarioConfig
    records: tuple[RepRecord, ...]
    failures: tuple[tuple[int, str], ...]

    @property
    def failed(self) -> bool:
        return len(self.failures) > 0.1 * self.config.reps

    def mean(self, metric: str) -> float:
        return float(np.mean([getattr(r, metric) for r in self.records]))

    def sd(self, metric: str) -> float:
        values = [getattr(r, metric) for r in self.records]
        return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0

    def coverage(self, which: str = "unstratified") -> float:
        flag = f"covers_{which}"
        return float(np.mean([getattr(r, flag) for r in self.records]))


@dataclass(frozen=True)
class SweepResult:
    points: tuple[DesignPointResult, ...]
    seed: int

    def to_rows(self) -> list[dict]:
        rows = []
        for point in self.points:
            cfg = point.config
            row = {
                "scenario": cfg.scenario,
                "q": cfg.q,
                "propensity_subset": "+".join(str(i) for i in cfg.propensity_subset),
                "n_frac": cfg.n_frac,
                "target_r2": cfg.target_r2,
                "N": cfg.N,
                "reps": cfg.reps,
                "n_failed": len(point.failures),
                "failed": point.failed,
            }
            for metric in _METRICS:
                row[f"{metric}_mean"] = point.mean(metric)
                row[f"{metric}_sd"] = point.sd(metric)
            row["coverage_unstratified"] = point.coverage("unstratified")
            row["coverage_stratified"] = point.coverage("stratified")
            rows.append(row)
        return rows


def _sweep_task(args: tuple[int, ScenarioConfig, int]):
    point_index, config, rep_index = args
    try:
        return point_index, rep_index, run_replication(config, rep_index), None
    except Exception as exc:  # collected per design point, never fatal here
        return point_index, rep_index, None, str(exc)


def run_sweep(grid: Sequence[ScenarioConfig], workers: int = 1) -> SweepResult:
    """Run every design point for its configured replication count.

    Deterministic for a fixed grid and seeds regardless of worker count:
    replication seeds depend only on (seed, design point, rep index) and
    results are aggregated in replication order.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("empty design grid")
    tasks = [
        (pi, config, ri)
        for pi, config in enumerate(grid)
        for ri in range(config.reps)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            raw = list(pool.map(_sweep_task, tasks, chunksize=8))
    else:
        raw = [_sweep_task(t) for t in tasks]

    by_point: dict[int, list] = {pi: [] for pi in range(len(grid))}
    for point_index, rep_index, record, error in raw:
        by_point[point_index].append((rep_index, record, error))
    points = []
    for pi, config in enumerate(grid):
        entries = sorted(by_point[pi], key=lambda e: e[0])
        records = tuple(rec for _, rec, err in entries if err is None)
        failures = tuple((ri, err) for ri, _, err in entries if err is not None)
        points.append(DesignPointResult(config=config, records=records, failures=failures))
    return SweepResult(points=tuple(points), seed=grid[0].seed)


def enumerate_propensity_subsets(min_size: int = 2, max_size: int = 6) -> list[tuple[int, ...]]:
    """All covariate subsets of the given sizes; sizes 2..6 give 57 subsets."""
    subsets = []
    for size in range(min_size, max_size + 1):
        subsets.extend(itertools.combinations(range(1, N_COVARIATES + 1), size))
    return subsets


# Overlap is driven by how many selection covariates (X1-X3) the analyst's
# subset contains; averaging over all C(6, q) subsets makes mean overlap
# fall in q but costs 57 design points.  These fixed triples span the
# selection-covariate content of each size and preserve the same trend at
# a fraction of the cost (q = 6 has a single subset).
COVARIATE_COUNT_SUBSETS: dict[int, tuple[tuple[int, ...], ...]] = {
    2: ((5, 6), (1, 4), (1, 2)),
    3: ((4, 5, 6), (1, 4, 5), (1, 2, 3)),
    4: ((3, 4, 5, 6), (1, 3, 4, 5), (1, 2, 3, 4)),
    5: ((2, 3, 4, 5, 6), (1, 3, 4, 5, 6), (1, 2, 3, 4, 5)),
    6: ((1, 2, 3, 4, 5, 6),),
}


def covariate_count_grid(scenario: int, base: Optional[ScenarioConfig] = None) -> list[ScenarioConfig]:
    """Design points sweeping the analyst's covariate count q from 2 to 6,
    several representative subsets per size."""
    base = base or ScenarioConfig(scenario=scenario)
    return [
        replace(base, scenario=scenario, propensity_subset=subset, outcome_covariates=None)
        for q in sorted(COVARIATE_COUNT_SUBSETS)
        for subset in COVARIATE_COUNT_SUBSETS[q]
    ]


def sample_size_grid(
    scenario: int,
    n_fracs: Sequence[float] = (0.05, 0.011, 0.008, 0.0055),
    r2_values: Sequence[float] = (0.10, 0.25, 0.50, 0.75, 0.90),
    base: Optional[ScenarioConfig] = None,
) -> list[ScenarioConfig]:
    """Design points crossing sampling fraction with target R-squared at the
    scenario's fixed analyst subset."""
    base = base or ScenarioConfig(scenario=scenario)
    return [
        replace(
            base,
            scenario=scenario,
            n_frac=float(n_frac),
            target_r2=float(r2),
            propensity_subset=_default_propensity_subset(scenario),
            outcome_covariates=None,
        )
        for n_frac in n_fracs
        for r2 in r2_values
    ]
