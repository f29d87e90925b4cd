"""Empirical prediction rates and the unsupervised F-beta family.

Two detectors emit per-example anomaly confidences ``p_s`` and ``p_q`` in
``[0, 1]``. Everything here is a pure function of the three moments

    mu_s  = mean(p_s),   mu_q = mean(p_q),   mu_sq = mean(p_s * p_q),

from which the joint-event rate ``J = mu_sq``, the disagreement-based
false-positive estimate ``D``, and the unsupervised score

    fbeta_hat = (1 + beta^2) * (J - D) / (J + alpha * beta^2)

are derived. ``beta = 0`` gives the precision proxy, ``beta = inf`` the
recall proxy. Supervised counterparts are provided for evaluation when
ground-truth labels exist.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConstraintViolation, DegenerateRates

INFINITY = math.inf

#: relative tolerance used by invariant checks throughout the package
REL_TOL = 1e-12


def as_prediction_vector(values) -> np.ndarray:
    """Coerce to a float64 vector and validate entries lie in [0, 1]."""
    p = np.asarray(values, dtype=np.float64)
    if p.ndim != 1 or p.size < 1:
        raise ValueError("prediction vector must be one-dimensional and non-empty")
    if not np.all(np.isfinite(p)):
        raise ValueError("prediction vector contains non-finite entries")
    if p.min() < 0.0 or p.max() > 1.0:
        raise ValueError("prediction entries must lie in [0, 1]")
    return p


def _as_binary(values, name: str) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if not np.all((v == 0.0) | (v == 1.0)):
        raise ValueError(f"{name} must be binary (entries in {{0, 1}})")
    return v


@dataclass(frozen=True)
class MetricParams:
    """Assumed anomaly fraction ``alpha`` and the precision/recall weight ``beta``.

    Only the product ``kappa = alpha * beta**2`` enters the score; ``alpha``
    by itself matters only for the recall proxy and for reporting.
    ``beta`` may be ``INFINITY`` (recall extreme).
    """

    alpha: float
    beta: float

    def __post_init__(self):
        if not (0.0 < self.alpha <= 0.5):
            raise ValueError(f"alpha must be in (0, 0.5], got {self.alpha}")
        if math.isnan(self.beta) or self.beta < 0.0:
            raise ValueError(f"beta must be >= 0 (or infinity), got {self.beta}")

    @property
    def kappa(self) -> float:
        return self.alpha * self.beta * self.beta


@dataclass(frozen=True)
class RateSummary:
    """The empirical rates from which every metric in this package derives.

    ``j`` equals ``mu_sq`` by definition (fraction of joint events);
    ``d`` is the disagreement-based false-positive estimate and ``d_naive``
    the full-independence one (``mu_s * mu_q``).
    """

    mu_s: float
    mu_q: float
    mu_sq: float
    j: float
    d: float
    d_naive: float
    n: int

    @property
    def at_constraint_boundary(self) -> bool:
        """True when a mean rate sits exactly on the 0.5 constraint."""
        return self.mu_s == 0.5 or self.mu_q == 0.5


def disagreement(mu_s, mu_q, mu_sq):
    """False-positive fraction estimated from conditional disagreement rates.

    ``D = E[p_s | not p_q] * E[p_q | not p_s]``; broadcasts over arrays.
    """
    return ((mu_s - mu_sq) / (1.0 - mu_q)) * ((mu_q - mu_sq) / (1.0 - mu_s))


def compute_rates(p_s, p_q) -> RateSummary:
    """Empirical rate summary of a prediction-vector pair.

    Raises ``DegenerateRates`` when ``mu_s`` or ``mu_q`` equals 1 (the
    disagreement estimate would divide by zero).
    """
    ps = as_prediction_vector(p_s)
    pq = as_prediction_vector(p_q)
    if ps.size != pq.size:
        raise ValueError(f"length mismatch: p_s has {ps.size} entries, p_q has {pq.size}")
    mu_s = float(ps.mean())
    mu_q = float(pq.mean())
    mu_sq = float((ps * pq).mean())
    if mu_s == 1.0 or mu_q == 1.0:
        raise DegenerateRates(
            f"mu_s={mu_s}, mu_q={mu_q}: a rate of 1 leaves no disagreement mass"
        )
    d = float(disagreement(mu_s, mu_q, mu_sq))
    return RateSummary(
        mu_s=mu_s, mu_q=mu_q, mu_sq=mu_sq,
        j=mu_sq, d=d, d_naive=mu_s * mu_q, n=int(ps.size),
    )


def fbeta_hat_moments(mu_s, mu_q, mu_sq, *, beta, alpha, naive=False):
    """Unsupervised F-beta from raw moments. No constraint checks; broadcasts.

    The null solution (``mu_sq == 0``) scores 0 for every beta. With
    ``naive=True`` the independence-based false-positive estimate
    ``mu_s * mu_q`` replaces the disagreement estimate.
    """
    mu_s = np.asarray(mu_s, dtype=np.float64)
    mu_q = np.asarray(mu_q, dtype=np.float64)
    mu_sq = np.asarray(mu_sq, dtype=np.float64)
    cov = mu_sq - mu_s * mu_q
    with np.errstate(divide="ignore", invalid="ignore"):
        if naive:
            excess = cov  # J - D_naive
        else:
            excess = cov * (1.0 - mu_sq) / ((1.0 - mu_s) * (1.0 - mu_q))  # J - D
        if math.isinf(beta):
            val = excess / alpha
        else:
            val = (1.0 + beta * beta) * excess / (mu_sq + alpha * beta * beta)
    val = np.where(mu_sq == 0.0, 0.0, val)
    if val.ndim == 0:
        return float(val)
    return val


def precision_hat_moments(mu_s, mu_q, mu_sq):
    """Precision proxy (beta = 0) from raw moments; broadcasts."""
    return fbeta_hat_moments(mu_s, mu_q, mu_sq, beta=0.0, alpha=0.5)


def recall_hat_moments(mu_s, mu_q, mu_sq, alpha):
    """Recall proxy (beta = inf) from raw moments; broadcasts."""
    return fbeta_hat_moments(mu_s, mu_q, mu_sq, beta=INFINITY, alpha=alpha)


def f_beta_hat(rates: RateSummary, params: MetricParams) -> float:
    """Unsupervised F-beta with the minority-class constraint enforced.

    Raises ``ConstraintViolation`` when ``mu_s > 0.5`` or ``mu_q > 0.5``
    (exactly 0.5 is allowed; it is the constraint boundary). ``mu_sq == 0``
    returns 0 by the null-solution convention.
    """
    if rates.mu_s > 0.5 or rates.mu_q > 0.5:
        raise ConstraintViolation(
            "mean prediction rates must stay at or below 0.5 "
            f"(anomalies are the rare class); got mu_s={rates.mu_s}, mu_q={rates.mu_q}"
        )
    return float(
        fbeta_hat_moments(rates.mu_s, rates.mu_q, rates.mu_sq, beta=params.beta, alpha=params.alpha)
    )


def supervised_f_beta(p_s, p_q, labels, beta) -> float:
    """Supervised F-beta of the joint prediction ``p_s * p_q`` against labels.

    Inputs must be categorical ({0, 1}). ``beta = 0`` is precision,
    ``beta = INFINITY`` is recall. Returns 0 whenever the score's
    denominator is empty (no predicted positives at beta = 0, no actual
    positives at beta = inf).
    """
    ps = _as_binary(p_s, "p_s")
    pq = _as_binary(p_q, "p_q")
    y = _as_binary(labels, "labels")
    if not (ps.size == pq.size == y.size):
        raise ValueError(
            f"length mismatch: p_s has {ps.size}, p_q has {pq.size}, labels has {y.size}"
        )
    joint = ps * pq
    tp = float(joint[y == 1.0].sum())
    n_pred = float(joint.sum())
    n_pos = float(y.sum())
    if math.isinf(beta):
        return tp / n_pos if n_pos > 0 else 0.0
    denom = n_pred + beta * beta * n_pos
    if denom == 0.0:
        return 0.0
    return (1.0 + beta * beta) * tp / denom


def supervised_precision_recall(p_s, p_q, labels) -> tuple[float, float]:
    """(recall, precision) of the joint prediction; 0 where undefined."""
    recall = supervised_f_beta(p_s, p_q, labels, INFINITY)
    precision = supervised_f_beta(p_s, p_q, labels, 0.0)
    return recall, precision
