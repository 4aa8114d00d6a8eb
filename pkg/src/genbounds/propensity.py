"""Sampling-propensity model: logistic regression of selection on covariates.

The model is fit by iteratively reweighted least squares on standardized
covariates, with zero initialization and step halving, so refits are
bit-for-bit deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .frame import FrameError, StudyFrame

GRADIENT_TOL = 1e-8
MAX_ITERATIONS = 50
SCORE_CLIP = 1e-12
SEPARATION_SCORE_TOL = 1e-10
SEPARATION_COEF_MAX = 30.0
RIDGE_STRENGTH = 1e-4


class SeparationError(RuntimeError):
    """Perfect or quasi-separation in the selection model."""


class RankDeficiencyError(RuntimeError):
    """Singular weighted normal equations (collinear covariates)."""


@dataclass(frozen=True)
class LogisticModel:
    """Fitted selection model.  Coefficients live on the standardized scale."""

    intercept: float
    coefficients: np.ndarray
    covariate_names: tuple[str, ...]
    converged: bool
    iterations: int
    final_gradient_norm: float
    means: np.ndarray
    sds: np.ndarray

    @property
    def raw_coefficients(self) -> np.ndarray:
        """Coefficients on the original covariate scale."""
        return self.coefficients / self.sds

    @property
    def raw_intercept(self) -> float:
        return float(self.intercept - np.sum(self.coefficients * self.means / self.sds))

    def to_json_dict(self) -> dict:
        return {
            "intercept": self.intercept,
            "coefficients": list(self.coefficients),
            "covariate_names": list(self.covariate_names),
            "standardization": {"means": list(self.means), "sds": list(self.sds)},
            "converged": self.converged,
            "iterations": self.iterations,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json_dict(cls, obj: dict) -> "LogisticModel":
        return cls(
            intercept=float(obj["intercept"]),
            coefficients=np.array(obj["coefficients"], dtype=float),
            covariate_names=tuple(obj["covariate_names"]),
            converged=bool(obj["converged"]),
            iterations=int(obj["iterations"]),
            final_gradient_norm=float(obj.get("final_gradient_norm", np.nan)),
            means=np.array(obj["standardization"]["means"], dtype=float),
            sds=np.array(obj["standardization"]["sds"], dtype=float),
        )


@dataclass(frozen=True)
class ScoreSet:
    """Per-unit selection scores aligned to frame row order.

    The sample is a subset of the population, so population_scores covers
    all N units and sample_scores is the z = 1 view.
    """

    scores: np.ndarray
    z: np.ndarray
    w: np.ndarray
    ids: tuple[str, ...]

    @property
    def sample_scores(self) -> np.ndarray:
        return self.scores[self.z == 1]

    @property
    def nonsample_scores(self) -> np.ndarray:
        return self.scores[self.z == 0]

    @property
    def population_scores(self) -> np.ndarray:
        return self.scores


def _sigmoid(eta: np.ndarray) -> np.ndarray:
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def log_likelihood(design: np.ndarray, z: np.ndarray, beta: np.ndarray,
                   penalty: Optional[np.ndarray] = None) -> float:
    """Binomial log-likelihood of Z, optionally ridge-penalized."""
    eta = design @ beta
    ll = float(np.sum(z * eta - np.logaddexp(0.0, eta)))
    if penalty is not None:
        ll -= 0.5 * float(np.sum(penalty * beta**2))
    return ll


def score_vector(design: np.ndarray, z: np.ndarray, beta: np.ndarray,
                 penalty: Optional[np.ndarray] = None) -> np.ndarray:
    """Analytic gradient of the (penalized) log-likelihood."""
    mu = _sigmoid(design @ beta)
    g = design.T @ (z - mu)
    if penalty is not None:
        g -= penalty * beta
    return g


def fit_logistic(
    frame: StudyFrame,
    covariate_subset: Optional[Sequence[int]] = None,
    ridge: bool = False,
) -> LogisticModel:
    """Fit the selection model on a subset of covariates (0-based indices).

    An empty subset gives the intercept-only model.  Covariates are
    standardized internally (mean 0, sd 1 over all N units); the transform
    is stored on the model.  Without the ridge opt-in, quasi-separation
    (a fitted score within 1e-10 of {0, 1} or a standardized coefficient
    beyond 30) raises SeparationError.
    """
    if covariate_subset is None:
        covariate_subset = range(frame.q)
    subset = tuple(int(j) for j in covariate_subset)
    for j in subset:
        if not 0 <= j < frame.q:
            raise FrameError(f"covariate index {j} out of range for q={frame.q}")

    x = frame.x[:, subset]
    means = x.mean(axis=0) if subset else np.empty(0)
    sds = x.std(axis=0, ddof=1) if subset else np.empty(0)
    for pos, j in enumerate(subset):
        if sds[pos] == 0 or not np.isfinite(sds[pos]):
            raise FrameError(
                f"covariate {frame.covariate_names[j]!r} has zero variance"
            )
    xs = (x - means) / sds if subset else x
    N = frame.N
    design = np.column_stack([np.ones(N), xs])
    z = frame.z.astype(float)
    p = design.shape[1]
    penalty = None
    if ridge:
        penalty = np.full(p, RIDGE_STRENGTH)
        penalty[0] = 0.0  # intercept unpenalized

    beta = np.zeros(p)
    ll = log_likelihood(design, z, beta, penalty)
    iterations = 0
    converged = False
    grad_norm = np.inf
    for iterations in range(1, MAX_ITERATIONS + 1):
        mu = _sigmoid(design @ beta)
        grad = design.T @ (z - mu)
        if penalty is not None:
            grad = grad - penalty * beta
        grad_norm = float(np.max(np.abs(grad)))
        if grad_norm < GRADIENT_TOL:
            converged = True
            iterations -= 1
            break
        weights = mu * (1.0 - mu)
        hessian = design.T @ (design * weights[:, None])
        if penalty is not None:
            hessian = hessian + np.diag(penalty)
        try:
            delta = np.linalg.solve(hessian, grad)
        except np.linalg.LinAlgError:
            raise RankDeficiencyError(
                "singular weighted normal equations; covariates are collinear"
            )
        if not np.isfinite(delta).all():
            raise RankDeficiencyError(
                "non-finite update; covariates are collinear or degenerate"
            )
        # step halving on likelihood decrease; tolerance is relative so
        # float rounding at |ll| ~ 1e4 cannot reject a good Newton step
        step = 1.0
        slack = 1e-10 * (1.0 + abs(ll))
        for _ in range(40):
            candidate = beta + step * delta
            ll_new = log_likelihood(design, z, candidate, penalty)
            if ll_new >= ll - slack:
                break
            step /= 2.0
        beta = beta + step * delta
        ll = ll_new
        if not ridge and np.max(np.abs(beta[1:]), initial=0.0) > SEPARATION_COEF_MAX:
            raise SeparationError(
                "coefficient diverged beyond 30 on the standardized scale; "
                "data are separated, refit with ridge enabled"
            )
    else:
        mu = _sigmoid(design @ beta)
        grad = design.T @ (z - mu)
        if penalty is not None:
            grad = grad - penalty * beta
        grad_norm = float(np.max(np.abs(grad)))
        converged = grad_norm < GRADIENT_TOL

    mu = _sigmoid(design @ beta)
    if not ridge:
        if (mu <= SEPARATION_SCORE_TOL).any() or (mu >= 1 - SEPARATION_SCORE_TOL).any():
            raise SeparationError(
                "fitted scores reach the {0, 1} boundary; data are separated, "
                "refit with ridge enabled"
            )
        if np.max(np.abs(beta[1:]), initial=0.0) > SEPARATION_COEF_MAX:
            raise SeparationError(
                "coefficient magnitude exceeds 30 on the standardized scale; "
                "data are separated, refit with ridge enabled"
            )

    return LogisticModel(
        intercept=float(beta[0]),
        coefficients=beta[1:].copy(),
        covariate_names=tuple(frame.covariate_names[j] for j in subset),
        converged=converged,
        iterations=iterations,
        final_gradient_norm=grad_norm,
        means=means,
        sds=sds,
    )


def predict_scores(model: LogisticModel, frame: StudyFrame) -> ScoreSet:
    """Score every unit with the model, applying its stored standardization.

    Scores are clipped to [1e-12, 1 - 1e-12] so downstream logits stay finite.
    """
    try:
        cols = [frame.covariate_names.index(name) for name in model.covariate_names]
    except ValueError as exc:
        raise FrameError(f"frame lacks model covariate: {exc}")
    if model.covariate_names:
        xs = (frame.x[:, cols] - model.means) / model.sds
        eta = model.intercept + xs @ model.coefficients
    else:
        eta = np.full(frame.N, model.intercept)
    scores = np.clip(_sigmoid(eta), SCORE_CLIP, 1.0 - SCORE_CLIP)
    return ScoreSet(scores=scores, z=frame.z, w=frame.w, ids=frame.ids)
