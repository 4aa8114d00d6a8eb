"""Command-line surface: analyze real frames, run simulation sweeps, and
print overlap diagnostics.

Exit codes: 0 success; 1 validation or config failure; 2 separation
without the ridge opt-in; 3 unsatisfiable strata minima.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click

from .bounds import BoundsError, RangePolicy
from .frame import FrameError, OutcomeRange, load_frame
from .overlap import estimate_overlap
from .propensity import SeparationError, fit_logistic, predict_scores
from .report import (
    GridConfigError,
    load_grid,
    run_analysis,
    write_sweep_outputs,
)
from .simulate import run_sweep
from .stratify import StrataError

EXIT_VALIDATION = 1
EXIT_SEPARATION = 2
EXIT_STRATA = 3


def _parse_covariates(text: str) -> list[str]:
    names = [part.strip() for part in text.split(",") if part.strip()]
    if not names:
        raise FrameError("no covariate names given")
    return names


def _parse_range(text: str) -> OutcomeRange:
    try:
        lo, hi = text.split(":")
        return OutcomeRange(float(lo), float(hi))
    except (ValueError, FrameError):
        raise FrameError(f"invalid outcome range {text!r}; expected LO:HI with LO < HI")


@click.group()
def main():
    """Bounds for generalizing treatment effects from nonrandom samples."""


@main.command()
@click.option("--data", required=True, type=click.Path(), help="Frame CSV.")
@click.option("--covariates", required=True, help="Comma-separated covariate columns.")
@click.option("--range", "outcome_range", required=True, help="Outcome range LO:HI.")
@click.option("--kmax", default=5, show_default=True, help="Maximum stratum count.")
@click.option(
    "--policy",
    type=click.Choice([p.value for p in RangePolicy]),
    default=RangePolicy.STRATUM_EMPIRICAL.value,
    show_default=True,
)
@click.option("--ridge", is_flag=True, help="Ridge-penalize the selection model.")
@click.option("--out", type=click.Path(), default=None, help="JSON report path.")
def analyze(data, covariates, outcome_range, kmax, policy, ridge, out):
    """Full pipeline: fit, score, stratify, bound, and report."""
    try:
        names = _parse_covariates(covariates)
        rng = _parse_range(outcome_range)
        frame = load_frame(data)
        report = run_analysis(
            frame, names, rng, k_max=kmax, policy=RangePolicy(policy), ridge=ridge
        )
    except SeparationError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_SEPARATION)
    except StrataError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_STRATA)
    except (FrameError, BoundsError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    if out:
        Path(out).write_text(report.to_json(), encoding="utf-8")
    click.echo(report.render_table())


@main.command()
@click.option("--data", required=True, type=click.Path(), help="Frame CSV.")
@click.option("--covariates", required=True, help="Comma-separated covariate columns.")
@click.option("--ridge", is_flag=True, help="Ridge-penalize the selection model.")
def overlap(data, covariates, ridge):
    """Print the overlap statistic for a frame."""
    try:
        names = _parse_covariates(covariates)
        frame = load_frame(data)
        subset = []
        for name in names:
            if name not in frame.covariate_names:
                raise FrameError(f"unknown covariate column(s): {name}")
            subset.append(frame.covariate_names.index(name))
        model = fit_logistic(frame, subset, ridge=ridge)
        scores = predict_scores(model, frame)
        stat = estimate_overlap(scores)
    except SeparationError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_SEPARATION)
    except (FrameError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    click.echo(
        f"overlap {stat.omega:.4f}  band [{stat.lo:.4f}, {stat.hi:.4f}]  "
        f"{stat.n_pop_inside}/{stat.n_pop_total} population units inside"
    )
    click.echo(stat.to_json())


@main.command()
@click.option("--grid", required=True, type=click.Path(), help="JSON/TOML sweep grid.")
@click.option("--out", required=True, type=click.Path(), help="Output directory.")
@click.option("--seed", type=int, default=None, help="Override the grid seed.")
@click.option("--workers", default=1, show_default=True, help="Concurrent workers.")
def simulate(grid, out, seed, workers):
    """Run a simulation sweep and write CSV/JSON outputs."""
    from dataclasses import replace

    try:
        configs = load_grid(grid)
    except GridConfigError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    if seed is not None:
        configs = [replace(c, seed=seed) for c in configs]
    start = time.monotonic()
    result = run_sweep(configs, workers=workers)
    manifest = write_sweep_outputs(result, out, elapsed_seconds=time.monotonic() - start)
    n_failed = manifest["n_failed_points"]
    click.echo(
        f"{manifest['n_design_points']} design points, {n_failed} failed; "
        f"outputs in {out}"
    )
    if n_failed > 0.1 * manifest["n_design_points"]:
        sys.exit(EXIT_VALIDATION)


if __name__ == "__main__":
    main()
