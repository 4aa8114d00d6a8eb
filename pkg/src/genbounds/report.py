"""End-to-end analysis of a real study frame, and sweep-grid file I/O.

run_analysis chains the full pipeline (load -> validate -> fit -> score ->
overlap -> stratify -> bounds -> gain) and packages the result so the CLI
is a pure re-serialization of library calls.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .bounds import (
    BoundsEstimate,
    RangePolicy,
    estimate_sate,
    precision_gain,
    stratified_bounds,
    worst_case_bounds,
)
from .frame import FrameError, OutcomeRange, StudyFrame, validate_frame
from .overlap import OverlapStat, estimate_overlap
from .propensity import LogisticModel, fit_logistic, predict_scores
from .simulate import (
    ScenarioConfig,
    SweepResult,
    covariate_count_grid,
    enumerate_propensity_subsets,
    r_squared,
    sample_size_grid,
)
from .stratify import assign_equal_strata, effective_strata_count, stratum_summaries


@dataclass(frozen=True)
class AnalysisReport:
    study: dict
    model: LogisticModel
    overlap: OverlapStat
    unstratified: BoundsEstimate
    stratified: BoundsEstimate
    gain: float
    r2: float
    k: int
    strata: list[dict]
    warnings: tuple[str, ...]

    def to_json_dict(self) -> dict:
        return {
            "study": self.study,
            "model": self.model.to_json_dict(),
            "overlap": self.overlap.to_json_dict(),
            "unstratified": self.unstratified.to_json_dict(),
            "stratified": self.stratified.to_json_dict(),
            "precision_gain": self.gain,
            "r_squared": self.r2,
            "k": self.k,
            "strata": self.strata,
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)

    def render_table(self) -> str:
        """Human-readable summary; numbers rounded to 2 decimals."""
        lines = [
            f"Units: N={self.study['N']}  sampled n={self.study['n']}  "
            f"covariates q={self.study['q']}",
            f"Overlap: {self.overlap.omega:.2f}  "
            f"(band [{self.overlap.lo:.2f}, {self.overlap.hi:.2f}], "
            f"{self.overlap.n_pop_inside}/{self.overlap.n_pop_total} inside)",
            f"R-squared (outcome model): {self.r2:.2f}",
            f"Strata: k={self.k}  policy={self.stratified.policy.value}",
            f"Unstratified bounds: [{self.unstratified.lower:.2f}, "
            f"{self.unstratified.upper:.2f}]",
            f"Stratified bounds:   [{self.stratified.lower:.2f}, "
            f"{self.stratified.upper:.2f}]",
            f"Precision gain: {self.gain:.2f}",
        ]
        for warning in self.warnings:
            lines.append(f"warning: {warning}")
        return "\n".join(lines)


def run_analysis(
    frame: StudyFrame,
    covariate_names: Sequence[str],
    outcome_range: OutcomeRange,
    k_max: int = 5,
    policy: RangePolicy = RangePolicy.STRATUM_EMPIRICAL,
    ridge: bool = False,
) -> AnalysisReport:
    """Full pipeline on a validated frame, using the named covariates in
    the selection model."""
    problems = validate_frame(frame)
    if problems:
        raise FrameError("; ".join(problems))
    try:
        subset = [frame.covariate_names.index(name) for name in covariate_names]
    except ValueError:
        missing = [n for n in covariate_names if n not in frame.covariate_names]
        raise FrameError(f"unknown covariate column(s): {', '.join(missing)}")
    warnings = []
    model = fit_logistic(frame, subset, ridge=ridge)
    if ridge:
        warnings.append("selection model fit with ridge penalty")
    if not model.converged:
        warnings.append(
            f"selection model did not converge in {model.iterations} iterations"
        )
    scores = predict_scores(model, frame)
    overlap = estimate_overlap(scores)
    sate = estimate_sate(frame)
    unstratified = worst_case_bounds(sate, frame.n, frame.N, outcome_range)
    k = effective_strata_count(scores, k_max)
    if k < k_max:
        warnings.append(f"reduced stratum count from {k_max} to {k}")
    assignment = assign_equal_strata(scores, k)
    stratified = stratified_bounds(frame, assignment, outcome_range, policy)
    for detail in stratified.strata:
        if detail.degenerate_range:
            warnings.append(
                f"stratum {detail.stratum}: single observed outcome value, "
                "width-zero empirical range"
            )
    gain = precision_gain(unstratified, stratified)
    r2 = r_squared(frame, subset)
    return AnalysisReport(
        study={
            "N": frame.N,
            "n": frame.n,
            "q": len(subset),
            "covariates": list(covariate_names),
        },
        model=model,
        overlap=overlap,
        unstratified=unstratified,
        stratified=stratified,
        gain=gain,
        r2=r2,
        k=k,
        strata=stratum_summaries(frame, assignment),
        warnings=tuple(warnings),
    )


class GridConfigError(ValueError):
    """Malformed sweep configuration file."""


_EXPANSION_KEYS = {
    "propensity_subsets": "propensity_subset",
    "target_r2s": "target_r2",
    "n_fracs": "n_frac",
}


def _expand_entry(entry: dict, defaults: dict) -> list[ScenarioConfig]:
    merged = {**defaults, **entry}
    sweep = merged.pop("sweep", None)
    if sweep is not None:
        if sweep not in ("covariate-count", "sample-size"):
            raise GridConfigError(f"unknown sweep kind {sweep!r}")
        scenario = int(merged.get("scenario", 1))
        try:
            base = ScenarioConfig(**{**merged, "scenario": scenario})
        except (TypeError, ValueError) as exc:
            raise GridConfigError(str(exc))
        if sweep == "covariate-count":
            return covariate_count_grid(scenario, base)
        return sample_size_grid(scenario, base=base)

    variants: list[dict] = [{}]
    for list_key, scalar_key in _EXPANSION_KEYS.items():
        if list_key not in merged:
            continue
        values = merged.pop(list_key)
        if list_key == "propensity_subsets" and values == "all":
            values = enumerate_propensity_subsets()
        if scalar_key == "propensity_subset":
            values = [tuple(v) for v in values]
        variants = [{**v, scalar_key: value} for v in variants for value in values]
    try:
        return [ScenarioConfig(**{**merged, **variant}) for variant in variants]
    except (TypeError, ValueError) as exc:
        raise GridConfigError(str(exc))


def load_grid(path) -> list[ScenarioConfig]:
    """Read a sweep grid from JSON or TOML.

    Layout: optional top-level ``seed`` and ``defaults`` mapping, plus a
    ``grid`` list of design-point entries.  Entries take ScenarioConfig
    field names; plural convenience keys (``propensity_subsets``,
    ``target_r2s``, ``n_fracs``) expand cross-product, with
    ``"propensity_subsets": "all"`` enumerating all 57 subsets of sizes
    2-6.  ``"sweep": "covariate-count"`` or ``"sweep": "sample-size"``
    expands to the built-in grids.
    """
    path = Path(path)
    try:
        if path.suffix.lower() == ".toml":
            import tomli

            with open(path, "rb") as fh:
                obj = tomli.load(fh)
        else:
            with open(path, encoding="utf-8") as fh:
                obj = json.load(fh)
    except (OSError, ValueError) as exc:
        raise GridConfigError(f"{path}: {exc}")
    if not isinstance(obj, dict) or "grid" not in obj:
        raise GridConfigError(f"{path}: expected a mapping with a 'grid' list")
    defaults = dict(obj.get("defaults", {}))
    if "seed" in obj:
        defaults.setdefault("seed", int(obj["seed"]))
    grid: list[ScenarioConfig] = []
    for entry in obj["grid"]:
        if not isinstance(entry, dict):
            raise GridConfigError(f"{path}: grid entries must be mappings")
        grid.extend(_expand_entry(entry, defaults))
    if not grid:
        raise GridConfigError(f"{path}: empty grid")
    return grid


def _format_cell(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, fieldnames: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(fieldnames)
        for row in rows:
            writer.writerow([_format_cell(row[name]) for name in fieldnames])


def write_sweep_outputs(
    result: SweepResult, out_dir, elapsed_seconds: Optional[float] = None
) -> dict:
    """Write sweep.csv, per-scenario figure-data CSVs, and manifest.json.

    The CSVs are byte-deterministic for a fixed grid and seed; only the
    manifest carries timing.  Returns the manifest dict.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = result.to_rows()
    _write_csv(out_dir / "sweep.csv", list(rows[0].keys()), rows)

    scenarios = sorted({p.config.scenario for p in result.points})
    for scenario in scenarios:
        fig_rows = [
            {
                "omega_mean": p.mean("omega"),
                "target_r2": p.config.target_r2,
                "gain_mean": p.mean("gain"),
                "n_frac": p.config.n_frac,
                "q": p.config.q,
            }
            for p in result.points
            if p.config.scenario == scenario and not p.failed
        ]
        if fig_rows:
            _write_csv(
                out_dir / f"figure_scenario{scenario}.csv",
                ["omega_mean", "target_r2", "gain_mean", "n_frac", "q"],
                fig_rows,
            )

    failed = [
        {
            "design_point": i,
            "config": p.config.to_json_dict(),
            "reasons": [msg for _, msg in p.failures],
        }
        for i, p in enumerate(result.points)
        if p.failed
    ]
    manifest = {
        "seed": result.seed,
        "n_design_points": len(result.points),
        "n_failed_points": len(failed),
        "failed_points": failed,
        "versions": {
            "genbounds": __version__,
            "numpy": np.__version__,
        },
        "timing_seconds": elapsed_seconds,
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    return manifest
