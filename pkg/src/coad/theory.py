"""Desk-scale executable checks of the metric's structural guarantees.

Covers four facts about the unsupervised F-beta:

* With one view fixed, the optimal other-view prediction vector is
  (nearly) categorical: a greedy fill of the largest conditional weights,
  fractional on at most one level.
* The maximal joint rate as a function of the target mean is concave
  increasing, so fractional solutions only survive at the tight 0.5
  constraint.
* Two candidate solutions compare by a closed-form critical beta.
* On overlap scenarios, the noisy s-region's label flips exactly at that
  critical beta, while the noisy q-region is always labeled anomalous.

Everything operates on small, exactly-computable instances: empirical
vectors with a 1:1 pairing, or exact overlap cell tables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ConstraintViolation, NoFlip
from .metric import (
    INFINITY,
    MetricParams,
    disagreement,
    fbeta_hat_moments,
)
from .synth import (
    ExactOverlapTable,
    OverlapScenario,
    TableRates,
    evaluate_table_labeling,
    exact_cell_table,
    validate_scenario,
)


@dataclass(frozen=True)
class CategoricalSolution:
    """A solution summarized by its joint rate and false-positive estimate."""

    mu_sq: float
    d: float
    description: str = ""


@dataclass(frozen=True)
class ComparisonVerdict:
    """Outcome of comparing two solutions across all beta.

    ``kind`` is one of ``a_always`` (a strictly better for every
    beta^2 above the nonpositive crossing, i.e. all beta > 0),
    ``b_always`` (a never strictly better), ``equal`` (identical scores
    for every beta), or ``flip_at`` (a wins strictly above
    ``beta_crit_sq``, b below).
    """

    kind: str
    beta_crit_sq: Optional[float] = None
    z: float = 0.0


def compare_solutions(a: CategoricalSolution, b: CategoricalSolution, alpha: float) -> ComparisonVerdict:
    """Closed-form comparison of two solutions; caller orders ``a.mu_sq >= b.mu_sq``."""
    for name, sol in (("a", a), ("b", b)):
        if sol.mu_sq < sol.d:
            raise ValueError(f"solution {name} has mu_sq < d; the comparison requires mu_sq >= d")
    if a.mu_sq < b.mu_sq:
        raise ValueError("order the arguments so a.mu_sq >= b.mu_sq")
    z = (a.mu_sq - b.mu_sq) - (a.d - b.d)
    if a.mu_sq == b.mu_sq and a.d == b.d:
        return ComparisonVerdict(kind="equal", z=z)
    if z <= 0.0:
        return ComparisonVerdict(kind="b_always", z=z)
    crit = (b.mu_sq * a.d - a.mu_sq * b.d) / (alpha * z)
    if crit <= 0.0:
        return ComparisonVerdict(kind="a_always", beta_crit_sq=crit, z=z)
    return ComparisonVerdict(kind="flip_at", beta_crit_sq=crit, z=z)


@dataclass(frozen=True)
class InnerSolution:
    """Optimal one-view prediction vector at a fixed target mean.

    Entries take values in {0, rho, 1}: 1 above the weight threshold
    ``tau``, ``rho`` on the tie group at ``tau``, 0 below. ``degenerate``
    flags an uninformative weight vector (all zero), where any feasible
    assignment achieves joint rate 0.
    """

    p_q_star: np.ndarray
    tau: float
    rho: float
    gamma: float
    mu_sq: float
    degenerate: bool = False


def _weights(p_s, pairing) -> np.ndarray:
    ps = np.asarray(p_s, dtype=np.float64)
    if pairing is None:
        return ps.copy()
    idx = np.asarray(pairing, dtype=np.int64)
    if idx.ndim != 1:
        raise ValueError("pairing must be a 1-d index map")
    return ps[idx]


def optimal_pq_given_ps(p_s, pairing, gamma: float) -> InnerSolution:
    """Greedy mass fill maximizing the joint rate at mean exactly ``gamma``.

    Weights are the paired other-view predictions (the empirical
    conditional expectation under a 1:1 pairing). Mass goes to the
    largest weights first; at most the tie group at the threshold is
    fractional.
    """
    if not (0.0 <= gamma <= 0.5):
        raise ConstraintViolation(f"gamma must be in [0, 0.5], got {gamma}")
    w = _weights(p_s, pairing)
    n = w.size
    mass = gamma * n
    values, counts = np.unique(w, return_counts=True)
    values, counts = values[::-1], counts[::-1]  # descending
    cum = 0.0
    tau = values[0]
    rho = 0.0
    count_above = 0
    for v, c in zip(values, counts):
        if mass <= cum + c:
            tau = float(v)
            rho = float((mass - cum) / c)
            count_above = int(round(cum))
            break
        cum += c
    else:
        raise ConstraintViolation("gamma exceeds the assignable mass")  # unreachable for gamma <= 0.5
    rho = min(max(rho, 0.0), 1.0)
    p_q = np.zeros(n)
    p_q[w > tau] = 1.0
    p_q[w == tau] = rho
    realized = float(p_q.mean())
    assert abs(realized - gamma) <= 1e-12, "constructed mean drifted from gamma"
    mu_sq = float((p_q * w).mean())
    return InnerSolution(p_q_star=p_q, tau=tau, rho=rho, gamma=gamma,
                         mu_sq=mu_sq, degenerate=bool(np.all(w == 0.0)))


def mu_sq_star_curve(p_s, pairing, gammas: Sequence[float]) -> np.ndarray:
    """Maximal joint rate at each target mean; nondecreasing and concave."""
    g = np.asarray(gammas, dtype=np.float64)
    if np.any(np.diff(g) < 0):
        raise ValueError("gammas must be nondecreasing")
    return np.array([optimal_pq_given_ps(p_s, pairing, float(x)).mu_sq for x in g])


def best_inner_solution(p_s, pairing, params: MetricParams) -> tuple[InnerSolution, float]:
    """Maximize the unsupervised F-beta over the target mean in [0, 0.5].

    Candidate means are the group boundaries of the greedy fill (where
    the solution is categorical) plus the constraint boundary 0.5, where
    alone a fractional level can be uniquely optimal. Ties keep the
    smallest candidate mean.
    """
    w = _weights(p_s, pairing)
    mu_s = float(np.asarray(p_s, dtype=np.float64).mean())
    if mu_s > 0.5:
        raise ConstraintViolation(f"the fixed view must satisfy mu_s <= 0.5, got {mu_s}")
    n = w.size
    _, counts = np.unique(w, return_counts=True)
    boundaries = np.cumsum(counts[::-1]) / n
    candidates = sorted({0.0, 0.5} | {float(b) for b in boundaries if b < 0.5})
    best_sol = None
    best_val = -math.inf
    for gamma in candidates:
        sol = optimal_pq_given_ps(p_s, pairing, gamma)
        val = float(fbeta_hat_moments(mu_s, gamma, sol.mu_sq, beta=params.beta, alpha=params.alpha))
        if val > best_val:
            best_val = val
            best_sol = sol
    return best_sol, best_val


# ---------------------------------------------------------------------------
# overlap scenarios: candidate labelings, critical beta, bound verification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CandidateLabeling:
    """Per-region prediction values for both views, with a short name."""

    name: str
    p_s_regions: tuple
    p_q_regions: tuple


def candidate_labelings(scenario: OverlapScenario) -> list[CandidateLabeling]:
    """The eight solution candidates over the region geometry.

    Four keep the clean regions at their class labels and toggle the two
    noisy regions; three saturate the rate constraint by fractionally
    labeling a clean normal region; one is the label-flipped twin of the
    last of those.
    """
    p_a = scenario.p_a
    p_ac = 1.0 - p_a
    p_ac_not_b = scenario.v1 * p_ac
    p_ac_not_c = scenario.v2 * p_ac
    p_a_union_b = p_a + (1.0 - scenario.v1) * p_ac
    p_a_union_c = p_a + (1.0 - scenario.v2) * p_ac
    d1 = (0.5 - p_a_union_b) / p_ac_not_b
    d2 = (0.5 - p_a_union_c) / p_ac_not_c
    d3 = 0.5 / p_ac_not_b
    d4 = 0.5 / p_ac_not_c
    out = []
    for rho, eta in product((0.0, 1.0), repeat=2):
        out.append(CandidateLabeling(
            name=f"clean|B={int(rho)},C={int(eta)}",
            p_s_regions=(1.0, rho, 0.0), p_q_regions=(1.0, eta, 0.0)))
    for rho, eta, tag in ((0.0, d2, "0,d2"), ((d1), 0.0, "d1,0"), (d1, d2, "d1,d2")):
        out.append(CandidateLabeling(
            name=f"saturated|{tag}",
            p_s_regions=(1.0, 1.0, rho), p_q_regions=(1.0, 1.0, eta)))
    out.append(CandidateLabeling(
        name="flipped|d3,d4",
        p_s_regions=(0.0, 0.0, d3), p_q_regions=(0.0, 0.0, d4)))
    return out


@dataclass(frozen=True)
class BetaCritResult:
    beta_crit_sq: float
    z: float


def beta_crit(scenario: OverlapScenario) -> BetaCritResult:
    """Critical squared beta at which labeling the noisy s-region flips.

    Uses the scenario's own anomaly fraction as alpha. Raises ``NoFlip``
    when the noisy s-region is empty (there is nothing to flip).
    """
    validate_scenario(scenario)
    table = exact_cell_table(scenario, validate=False)
    p_a = scenario.p_a
    p_a_and_b = float(table.cells_anomalous[1, :].sum())
    if scenario.b_is_empty or p_a_and_b + float(table.cells_normal[1, :].sum()) == 0.0:
        raise NoFlip("the noisy s-region is empty; the fractional level there is irrelevant")
    p_ac_bc = float(table.cells_normal[1, 1])
    p_ac_not_b = float(table.cells_normal[2, :].sum())
    p_ac_not_c = float(table.cells_normal[:, 2].sum())
    p_acnb_and_c = float(table.cells_normal[2, 1])
    p_acnc_and_b = float(table.cells_normal[1, 2])
    z = p_a_and_b + p_ac_bc - (p_acnb_and_c / p_ac_not_b) * (p_acnc_and_b / p_ac_not_c)
    if z <= 0.0:
        raise NoFlip(f"z={z:.6g} <= 0; one of the noisy regions is effectively empty")
    p_a_not_b = float(table.cells_anomalous[0, :].sum())
    crit = (p_a_not_b / p_a) * (p_acnb_and_c / p_ac_not_b) * (p_acnc_and_b / p_ac_not_c) / z
    return BetaCritResult(beta_crit_sq=float(crit), z=float(z))


def enumerate_optimal_labeling(table: ExactOverlapTable, scenario: OverlapScenario,
                               params: MetricParams) -> tuple[CandidateLabeling, TableRates, float]:
    """Argmax over the eight candidates on an exact table.

    Candidates violating the rate constraint are skipped; ties break
    toward larger joint rate and then toward flagging the noisy q-region.
    """
    best = None
    for cand in candidate_labelings(scenario):
        rates = evaluate_table_labeling(table, cand.p_s_regions, cand.p_q_regions)
        if rates.mu_s > 0.5 + 1e-12 or rates.mu_q > 0.5 + 1e-12:
            continue
        val = float(fbeta_hat_moments(rates.mu_s, rates.mu_q, rates.mu_sq,
                                      beta=params.beta, alpha=params.alpha))
        key = (val, rates.mu_sq, cand.p_q_regions[1], cand.p_s_regions[1])
        if best is None or key > best[0]:
            best = (key, cand, rates, val)
    if best is None:
        raise ConstraintViolation("no candidate labeling satisfies the rate constraint")
    return best[1], best[2], best[3]


@dataclass(frozen=True)
class BoundsRecord:
    """Bound checks of one labeling at one beta."""

    name: str
    beta: float
    fbeta_hat: float
    fbeta_sup: float
    d: float
    d_naive: float
    fp_fraction: float
    better_than_random: bool
    hypothesis_met: Optional[bool]
    excluded: bool
    note: str
    fhat_le_f: Optional[bool]
    d_ge_fp: Optional[bool]
    d_le_dnaive: Optional[bool]

    @property
    def passed(self) -> bool:
        checks = [c for c in (self.fhat_le_f, self.d_ge_fp, self.d_le_dnaive) if c is not None]
        return all(checks) if checks else True


def _table_f_sup(rates: TableRates, alpha: float, beta: float) -> float:
    if math.isinf(beta):
        return rates.tp / alpha if alpha > 0 else 0.0
    denom = rates.j + beta * beta * alpha
    return (1.0 + beta * beta) * rates.tp / denom if denom > 0 else 0.0


def _class_means(table: ExactOverlapTable, p_s_regions, p_q_regions):
    ps = np.asarray(p_s_regions, dtype=np.float64)
    pq = np.asarray(p_q_regions, dtype=np.float64)
    a_s = table.cells_anomalous.sum(axis=1)
    a_q = table.cells_anomalous.sum(axis=0)
    n_s = table.cells_normal.sum(axis=1)
    n_q = table.cells_normal.sum(axis=0)
    p_a = table.p_a
    return ((ps @ a_s) / p_a, (ps @ n_s) / (1 - p_a),
            (pq @ a_q) / p_a, (pq @ n_q) / (1 - p_a))


def _bounds_record(name: str, beta: float, mu_s: float, mu_q: float, mu_sq: float,
                   fp: float, f_sup: float, alpha: float, slack: float,
                   hypothesis_met: Optional[bool], tol: float = 1e-12) -> BoundsRecord:
    better = mu_sq >= mu_s * mu_q - tol
    d = float(disagreement(mu_s, mu_q, mu_sq))
    d_naive = mu_s * mu_q
    fhat = float(fbeta_hat_moments(mu_s, mu_q, mu_sq, beta=beta, alpha=alpha))
    excluded = not better
    note = ""
    if excluded:
        note = "worse than random (mu_sq < mu_s*mu_q); bounds not applicable"
        return BoundsRecord(name=name, beta=beta, fbeta_hat=fhat, fbeta_sup=f_sup,
                            d=d, d_naive=d_naive, fp_fraction=fp,
                            better_than_random=False, hypothesis_met=hypothesis_met,
                            excluded=True, note=note,
                            fhat_le_f=None, d_ge_fp=None, d_le_dnaive=None)
    lower_bound_applicable = hypothesis_met is not False
    if not lower_bound_applicable:
        note = ("per-class means are label-flipped; the lower-bound theorem "
                "hypothesis fails, only the naive-estimate bound is checked")
    return BoundsRecord(
        name=name, beta=beta, fbeta_hat=fhat, fbeta_sup=f_sup,
        d=d, d_naive=d_naive, fp_fraction=fp,
        better_than_random=True, hypothesis_met=hypothesis_met,
        excluded=False, note=note,
        fhat_le_f=(fhat <= f_sup + slack + tol) if lower_bound_applicable else None,
        d_ge_fp=(d >= fp - slack - tol) if lower_bound_applicable else None,
        d_le_dnaive=d <= d_naive + tol,
    )


def verify_bounds_exact(scenario: OverlapScenario, betas: Sequence[float],
                        candidates: Optional[list[CandidateLabeling]] = None) -> list[BoundsRecord]:
    """Zero-slack bound checks of candidate labelings on the exact table.

    The lower-bound checks require the theorem hypothesis (each view's
    per-class mean no worse than random); with exact class information
    this is checked directly, and label-flipped candidates are reported
    with those checks skipped.
    """
    table = exact_cell_table(scenario)
    if candidates is None:
        candidates = candidate_labelings(scenario)
    records = []
    for cand in candidates:
        rates = evaluate_table_labeling(table, cand.p_s_regions, cand.p_q_regions)
        if rates.mu_s > 0.5 + 1e-12 or rates.mu_q > 0.5 + 1e-12:
            continue
        m_s1, m_s0, m_q1, m_q0 = _class_means(table, cand.p_s_regions, cand.p_q_regions)
        hypothesis = bool(m_s1 >= m_s0 - 1e-12) and bool(m_q1 >= m_q0 - 1e-12)
        for beta in betas:
            f_sup = _table_f_sup(rates, table.p_a, beta)
            records.append(_bounds_record(
                cand.name, beta, rates.mu_s, rates.mu_q, rates.mu_sq,
                fp=rates.fp, f_sup=f_sup, alpha=table.p_a, slack=0.0,
                hypothesis_met=hypothesis))
    return records


def verify_bounds_sampled(predictions: Sequence[tuple[str, np.ndarray, np.ndarray]],
                          labels, params: MetricParams, slack: float) -> list[BoundsRecord]:
    """Finite-sample bound checks for labeled categorical prediction pairs.

    ``slack`` absorbs sampling noise; "no worse than random" is
    operationalized as ``mu_sq >= mu_s * mu_q`` on the data.
    """
    from .metric import supervised_f_beta

    y = np.asarray(labels, dtype=np.float64)
    records = []
    for name, ps, pq in predictions:
        ps = np.asarray(ps, dtype=np.float64)
        pq = np.asarray(pq, dtype=np.float64)
        mu_s = float(ps.mean())
        mu_q = float(pq.mean())
        if mu_s > 0.5 or mu_q > 0.5 or mu_s == 1.0 or mu_q == 1.0:
            continue
        mu_sq = float((ps * pq).mean())
        joint = ps * pq
        fp = float(joint[y == 0.0].sum()) / y.size
        f_sup = supervised_f_beta(ps, pq, y, params.beta)
        records.append(_bounds_record(
            name, params.beta, mu_s, mu_q, mu_sq, fp=fp, f_sup=f_sup,
            alpha=params.alpha, slack=slack, hypothesis_met=None))
    return records


def verify_bounds(data: Union[OverlapScenario, tuple], labelings, params_or_betas,
                  slack: float = 0.0) -> list[BoundsRecord]:
    """Dispatch to the exact-table or sampled-data bound verification."""
    if isinstance(data, OverlapScenario):
        return verify_bounds_exact(data, betas=params_or_betas, candidates=labelings)
    labels = data[1] if isinstance(data, tuple) else None
    return verify_bounds_sampled(labelings, labels, params_or_betas, slack=slack)
