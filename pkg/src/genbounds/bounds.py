"""Worst-case bounds for the population average treatment effect.

Unstratified bounds anchor the sample effect at weight n/N and let the
unobserved remainder span the known outcome range.  Stratified bounds
apply the same construction within propensity strata and average with
weights N_j / N.

With a single global outcome range the stratified width telescopes back
to the unstratified width exactly, so the width reduction reported in
practice comes from per-stratum ranges.  The stratum-empirical policy
clips each stratum's range to the observed sample outcomes in that
stratum; it is the default, and the global policy is kept as a negative
control for the telescoping identity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .frame import OutcomeRange, StudyFrame
from .stratify import StratumAssignment


class BoundsError(ValueError):
    """Bound computation on degenerate inputs (empty arms, zero width)."""


class RangePolicy(str, Enum):
    GLOBAL = "global"
    STRATUM_EMPIRICAL = "stratum-empirical"


@dataclass(frozen=True)
class StratumBound:
    """Per-stratum detail behind a stratified bound."""

    stratum: int
    weight: float          # N_j / N
    pop_count: int         # N_j
    sample_count: int      # n_j
    sate: float
    pr_sampled: float      # n_j / N_j
    pr_unsampled: float    # (N_j - n_j) / N_j
    y_lo: float
    y_hi: float
    lower: float
    upper: float
    degenerate_range: bool

    def to_json_dict(self) -> dict:
        return {
            "stratum": self.stratum,
            "weight": self.weight,
            "N_j": self.pop_count,
            "n_j": self.sample_count,
            "sate": self.sate,
            "pr_sampled": self.pr_sampled,
            "pr_unsampled": self.pr_unsampled,
            "y_lo": self.y_lo,
            "y_hi": self.y_hi,
            "lower": self.lower,
            "upper": self.upper,
            "degenerate_range": self.degenerate_range,
        }


@dataclass(frozen=True)
class BoundsEstimate:
    lower: float
    upper: float
    policy: RangePolicy
    k: int
    strata: tuple[StratumBound, ...]

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def to_json_dict(self) -> dict:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "width": self.width,
            "policy": self.policy.value,
            "k": self.k,
            "strata": [s.to_json_dict() for s in self.strata],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())


def estimate_sate(frame: StudyFrame, unit_subset: Optional[Sequence[int]] = None) -> float:
    """Difference in mean observed outcomes between treated and control
    sampled units (optionally restricted to a unit subset)."""
    if unit_subset is None:
        mask = np.ones(frame.N, dtype=bool)
    else:
        mask = np.zeros(frame.N, dtype=bool)
        mask[list(unit_subset)] = True
    sampled = mask & (frame.z == 1)
    treated = sampled & (frame.w == 1)
    control = sampled & (frame.w == 0)
    if not treated.any():
        raise BoundsError("no treated units in subset")
    if not control.any():
        raise BoundsError("no control units in subset")
    return float(frame.y[treated].mean() - frame.y[control].mean())


def stratum_interval(
    sate: float,
    pr_sampled: float,
    pr_unsampled: float,
    y_lo: float,
    y_hi: float,
) -> tuple[float, float]:
    """Lower/upper bound contribution of one stratum (or the whole frame)."""
    anchor = sate * pr_sampled
    spread = (y_hi - y_lo) * pr_unsampled
    return anchor - spread, anchor + spread


def worst_case_bounds(
    sate: float, n: int, N: int, outcome_range: OutcomeRange
) -> BoundsEstimate:
    """Unstratified bounds from the sample effect, sampling fraction, and
    known outcome range.  Width is 2 (y_hi - y_lo) (1 - n/N); n = N collapses
    to the point [sate, sate]."""
    if n <= 0:
        raise BoundsError("no sampled units")
    if n > N:
        raise BoundsError(f"n={n} exceeds N={N}")
    pr_sampled = n / N
    pr_unsampled = (N - n) / N
    lower, upper = stratum_interval(
        sate, pr_sampled, pr_unsampled, outcome_range.y_lo, outcome_range.y_hi
    )
    detail = StratumBound(
        stratum=1,
        weight=1.0,
        pop_count=N,
        sample_count=n,
        sate=sate,
        pr_sampled=pr_sampled,
        pr_unsampled=pr_unsampled,
        y_lo=outcome_range.y_lo,
        y_hi=outcome_range.y_hi,
        lower=lower,
        upper=upper,
        degenerate_range=False,
    )
    return BoundsEstimate(
        lower=lower, upper=upper, policy=RangePolicy.GLOBAL, k=1, strata=(detail,)
    )


def stratified_bounds(
    frame: StudyFrame,
    assignment: StratumAssignment,
    outcome_range: OutcomeRange,
    policy: RangePolicy = RangePolicy.STRATUM_EMPIRICAL,
) -> BoundsEstimate:
    """Population-weighted average of per-stratum worst-case bounds.

    Every stratum must contain at least one treated and one control sampled
    unit; callers should size k via effective_strata_count first.  Under
    the stratum-empirical policy, stratum j uses the range
    [max(y_lo, min sample y in j), min(y_hi, max sample y in j)]; a stratum
    whose sampled outcomes are all equal gets a width-zero range and is
    flagged degenerate.
    """
    if assignment.labels.size != frame.N:
        raise BoundsError("assignment does not match frame")
    policy = RangePolicy(policy)
    details = []
    lower = 0.0
    upper = 0.0
    for j in range(1, assignment.k + 1):
        mask = assignment.labels == j
        N_j = int(assignment.pop_counts[j - 1])
        n_j = int(assignment.sample_counts[j - 1])
        if assignment.treated_counts[j - 1] < 1 or assignment.control_counts[j - 1] < 1:
            raise BoundsError(
                f"stratum {j} has an empty treatment arm; reduce k via "
                "effective_strata_count"
            )
        sate_j = estimate_sate(frame, np.flatnonzero(mask))
        pr_sampled = n_j / N_j
        pr_unsampled = (N_j - n_j) / N_j
        if policy is RangePolicy.GLOBAL:
            y_lo_j, y_hi_j = outcome_range.y_lo, outcome_range.y_hi
        else:
            y_s = frame.y[mask & (frame.z == 1)]
            y_lo_j = max(outcome_range.y_lo, float(np.min(y_s)))
            y_hi_j = min(outcome_range.y_hi, float(np.max(y_s)))
        lo_j, up_j = stratum_interval(sate_j, pr_sampled, pr_unsampled, y_lo_j, y_hi_j)
        weight = N_j / frame.N
        details.append(
            StratumBound(
                stratum=j,
                weight=weight,
                pop_count=N_j,
                sample_count=n_j,
                sate=sate_j,
                pr_sampled=pr_sampled,
                pr_unsampled=pr_unsampled,
                y_lo=y_lo_j,
                y_hi=y_hi_j,
                lower=lo_j,
                upper=up_j,
                degenerate_range=y_lo_j == y_hi_j,
            )
        )
        lower += weight * lo_j
        upper += weight * up_j
    return BoundsEstimate(
        lower=lower, upper=upper, policy=policy, k=assignment.k, strata=tuple(details)
    )


def precision_gain(unstratified: BoundsEstimate, stratified: BoundsEstimate) -> float:
    """Proportion reduction in bound width from stratification."""
    if unstratified.width <= 0:
        raise BoundsError("unstratified width must be positive")
    return 1.0 - stratified.width / unstratified.width
