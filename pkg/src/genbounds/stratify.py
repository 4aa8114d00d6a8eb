"""Equal-sized propensity-score strata over the population.

"Equal-sized" means equal population counts: units are sorted by score and
cut into k contiguous blocks whose sizes differ by at most one, so the
stratum weight N_j / N is 1/k up to integer rounding.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .frame import StudyFrame
from .propensity import ScoreSet


class StrataError(ValueError):
    """Stratification request that cannot be satisfied."""


@dataclass(frozen=True)
class StratumAssignment:
    """Per-unit stratum labels (1..k) aligned to frame order, with counts."""

    k: int
    labels: np.ndarray
    pop_counts: np.ndarray       # N_j
    sample_counts: np.ndarray    # n_j
    treated_counts: np.ndarray
    control_counts: np.ndarray
    scores: np.ndarray           # source scores, frame order

    def to_csv_rows(self, ids) -> list[tuple[str, int]]:
        return [(str(i), int(lab)) for i, lab in zip(ids, self.labels)]


def assign_equal_strata(scores: ScoreSet, k: int) -> StratumAssignment:
    """Cut units into k contiguous score blocks of near-equal population size.

    Units are ordered by (score, id); ties at a block boundary go to the
    lower stratum by ascending id.  Larger blocks come first when N is not
    divisible by k.
    """
    N = scores.scores.size
    if k < 1:
        raise StrataError(f"stratum count k={k} must be >= 1")
    if k > N:
        raise StrataError(f"stratum count k={k} exceeds N={N}")
    order = sorted(range(N), key=lambda i: (scores.scores[i], scores.ids[i]))
    base, rem = divmod(N, k)
    sizes = [base + 1 if j < rem else base for j in range(k)]
    labels = np.empty(N, dtype=np.int64)
    pop_counts = np.array(sizes, dtype=np.int64)
    sample_counts = np.zeros(k, dtype=np.int64)
    treated_counts = np.zeros(k, dtype=np.int64)
    control_counts = np.zeros(k, dtype=np.int64)
    pos = 0
    for j, size in enumerate(sizes):
        block = order[pos:pos + size]
        pos += size
        for i in block:
            labels[i] = j + 1
            if scores.z[i] == 1:
                sample_counts[j] += 1
                if scores.w[i] == 1:
                    treated_counts[j] += 1
                else:
                    control_counts[j] += 1
    return StratumAssignment(
        k=k,
        labels=labels,
        pop_counts=pop_counts,
        sample_counts=sample_counts,
        treated_counts=treated_counts,
        control_counts=control_counts,
        scores=np.asarray(scores.scores, dtype=float),
    )


def effective_strata_count(
    scores: ScoreSet,
    k_max: int = 5,
    min_treated: int = 1,
    min_control: int = 1,
) -> int:
    """Largest k <= k_max whose strata all meet the per-arm sample minima.

    Raises StrataError when the minima exceed the total treated/control
    counts, i.e. even k = 1 cannot satisfy them.
    """
    if k_max < 1:
        raise StrataError(f"k_max={k_max} must be >= 1")
    sampled = scores.z == 1
    total_treated = int(np.sum(scores.w[sampled] == 1))
    total_control = int(np.sum(scores.w[sampled] == 0))
    if total_treated < min_treated or total_control < min_control:
        raise StrataError(
            f"minima unsatisfiable even at k=1: {total_treated} treated, "
            f"{total_control} control in sample"
        )
    for k in range(min(k_max, scores.scores.size), 0, -1):
        assignment = assign_equal_strata(scores, k)
        if (assignment.treated_counts >= min_treated).all() and (
            assignment.control_counts >= min_control
        ).all():
            return k
    return 1


def stratum_summaries(frame: StudyFrame, assignment: StratumAssignment) -> list[dict]:
    """Per-stratum table: counts, sampling rate, mean score, sample outcome range."""
    if assignment.labels.size != frame.N:
        raise StrataError("assignment does not match frame")
    rows = []
    for j in range(1, assignment.k + 1):
        mask = assignment.labels == j
        sampled = mask & (frame.z == 1)
        n_j = int(assignment.sample_counts[j - 1])
        y_s = frame.y[sampled]
        rows.append(
            {
                "stratum": j,
                "N_j": int(assignment.pop_counts[j - 1]),
                "n_j": n_j,
                "sampling_rate": n_j / int(assignment.pop_counts[j - 1]),
                "mean_score": float(assignment.scores[mask].mean()),
                "y_min": float(np.min(y_s)) if n_j > 0 else None,
                "y_max": float(np.max(y_s)) if n_j > 0 else None,
            }
        )
    return rows


def summaries_to_json(rows: list[dict]) -> str:
    return json.dumps(rows)
