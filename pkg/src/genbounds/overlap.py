"""Distributional overlap between sample and population selection scores.

Overlap is the fraction of population units whose scores fall inside the
sample's 5th-95th percentile band.  Because the sample is a population
subset, the denominator covers all N units.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .propensity import ScoreSet


@dataclass(frozen=True)
class OverlapStat:
    omega: float
    lo: float
    hi: float
    n_pop_inside: int
    n_pop_total: int

    def to_json_dict(self) -> dict:
        return {
            "omega": self.omega,
            "lo": self.lo,
            "hi": self.hi,
            "n_pop_inside": self.n_pop_inside,
            "n_pop_total": self.n_pop_total,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())


def percentile(values: Sequence[float], p: float) -> float:
    """Percentile by linear interpolation between order statistics.

    With sorted values v_1..v_m and h = (m - 1) p / 100, returns
    v_{floor(h)+1} + (h - floor(h)) (v_{floor(h)+2} - v_{floor(h)+1}).
    """
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("percentile of an empty sequence")
    if not 0.0 <= p <= 100.0:
        raise ValueError(f"percentile p={p} outside [0, 100]")
    h = (v.size - 1) * p / 100.0
    lo = int(np.floor(h))
    if lo >= v.size - 1:
        return float(v[-1])
    return float(v[lo] + (h - lo) * (v[lo + 1] - v[lo]))


def overlap_from_scores(
    sample_scores: Sequence[float],
    population_scores: Sequence[float],
    lower_pct: float = 5.0,
    upper_pct: float = 95.0,
) -> OverlapStat:
    """Overlap of explicit score arrays; the band is closed, so boundary
    ties count as overlapping."""
    sample = np.asarray(sample_scores, dtype=float)
    population = np.asarray(population_scores, dtype=float)
    if sample.size == 0:
        raise ValueError("no sample scores")
    if population.size == 0:
        raise ValueError("no population scores")
    lo = percentile(sample, lower_pct)
    hi = percentile(sample, upper_pct)
    inside = int(np.sum((population >= lo) & (population <= hi)))
    return OverlapStat(
        omega=inside / population.size,
        lo=lo,
        hi=hi,
        n_pop_inside=inside,
        n_pop_total=int(population.size),
    )


def estimate_overlap(scores: ScoreSet) -> OverlapStat:
    """Overlap for a scored frame: sample band vs. all N population scores."""
    return overlap_from_scores(scores.sample_scores, scores.population_scores)
