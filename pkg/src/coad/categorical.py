"""Two-threshold detectors: grid scans and precision-recall frontiers.

A detector here is a pair of scalar cutoffs; a point is flagged anomalous
in a view when its score is *strictly greater* than the view's cutoff.
The scan evaluates the unsupervised F-beta for every cutoff pair on a
grid, skipping pairs that violate the minority-class constraint, and the
frontier keeps the Pareto-dominant (recall_hat, precision_hat) points.

Counting uses a 2-d histogram with suffix sums, which reproduces the
naive per-pair indicator counts exactly while staying O(G^2 + n log n).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence, Union

import numpy as np

from .errors import NoFeasiblePair
from .metric import (
    MetricParams,
    RateSummary,
    disagreement,
    fbeta_hat_moments,
    precision_hat_moments,
    recall_hat_moments,
)

GridSpec = Union[str, int, tuple]

_SENTINEL_PAD = 1.0


@dataclass(frozen=True)
class ThresholdPair:
    """Two scalar cutoffs; ``score > tau`` marks a point anomalous in that view."""

    tau_s: float
    tau_q: float


def apply_thresholds(s_scores, q_scores, pair: ThresholdPair) -> tuple[np.ndarray, np.ndarray]:
    """Categorical prediction vectors from a threshold pair."""
    s = np.asarray(s_scores, dtype=np.float64)
    q = np.asarray(q_scores, dtype=np.float64)
    if s.shape != q.shape or s.ndim != 1:
        raise ValueError(f"score vectors must be 1-d with equal length, got {s.shape} and {q.shape}")
    return (s > pair.tau_s).astype(np.float64), (q > pair.tau_q).astype(np.float64)


def midpoint_taus(scores, max_count: Optional[int] = None) -> np.ndarray:
    """Candidate cutoffs: midpoints of consecutive sorted unique scores plus
    one sentinel below the minimum and one above the maximum.

    With ``max_count`` the list is thinned to evenly spaced entries
    (endpoints kept), which keeps the choice deterministic and
    data-independent.
    """
    u = np.unique(np.asarray(scores, dtype=np.float64))
    mids = (u[:-1] + u[1:]) / 2.0
    taus = np.concatenate(([u[0] - _SENTINEL_PAD], mids, [u[-1] + _SENTINEL_PAD]))
    if max_count is not None and taus.size > max_count:
        idx = np.unique(np.round(np.linspace(0, taus.size - 1, max_count)).astype(int))
        taus = taus[idx]
    return taus


def _resolve_grid(s_scores, q_scores, grid_spec: GridSpec) -> tuple[np.ndarray, np.ndarray, dict]:
    if isinstance(grid_spec, str):
        if grid_spec != "all-midpoints":
            raise ValueError(f"unknown grid spec {grid_spec!r}")
        tau_s = midpoint_taus(s_scores)
        tau_q = midpoint_taus(q_scores)
        desc = {"kind": "all-midpoints"}
    elif isinstance(grid_spec, int):
        if grid_spec < 2:
            raise ValueError("downsampled grid needs at least 2 cutoffs per axis")
        tau_s = midpoint_taus(s_scores, max_count=grid_spec)
        tau_q = midpoint_taus(q_scores, max_count=grid_spec)
        desc = {"kind": "midpoints-downsampled", "count": grid_spec}
    elif isinstance(grid_spec, tuple) and len(grid_spec) == 2:
        tau_s = np.sort(np.asarray(grid_spec[0], dtype=np.float64))
        tau_q = np.sort(np.asarray(grid_spec[1], dtype=np.float64))
        if tau_s.size == 0 or tau_q.size == 0:
            raise ValueError("explicit grid must have at least one cutoff per axis")
        desc = {"kind": "explicit", "size_s": int(tau_s.size), "size_q": int(tau_q.size)}
    else:
        raise ValueError(f"grid spec must be 'all-midpoints', an int, or (taus_s, taus_q); got {grid_spec!r}")
    return tau_s, tau_q, desc


def _worker_count() -> int:
    raw = os.environ.get("COAD_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass
class GridMoments:
    """Per-pair counts of a threshold grid, shared by scan and frontier.

    ``mu_sq`` (and ``tp`` when labels are given) are matrices indexed by
    (tau_s index, tau_q index); ``mu_s``/``mu_q`` are per-axis vectors.
    """

    tau_s: np.ndarray
    tau_q: np.ndarray
    mu_s: np.ndarray
    mu_q: np.ndarray
    mu_sq: np.ndarray
    n: int
    n_pos: int = 0
    tp: Optional[np.ndarray] = None
    grid_desc: dict = field(default_factory=dict)

    @property
    def feasible(self) -> np.ndarray:
        return (self.mu_s[:, None] <= 0.5) & (self.mu_q[None, :] <= 0.5)


def _suffix_counts_2d(bins_s, bins_q, size_s, size_q) -> np.ndarray:
    counts = np.zeros((size_s + 1, size_q + 1), dtype=np.int64)
    np.add.at(counts, (bins_s, bins_q), 1)
    suffix = counts[::-1, ::-1].cumsum(axis=0).cumsum(axis=1)[::-1, ::-1]
    return suffix[1:, 1:]


def grid_moments(s_scores, q_scores, grid_spec: GridSpec, labels=None) -> GridMoments:
    """Exact joint/marginal positive counts for every pair on the grid."""
    s = np.asarray(s_scores, dtype=np.float64)
    q = np.asarray(q_scores, dtype=np.float64)
    if s.shape != q.shape or s.ndim != 1:
        raise ValueError(f"score vectors must be 1-d with equal length, got {s.shape} and {q.shape}")
    n = s.size
    tau_s, tau_q, desc = _resolve_grid(s, q, grid_spec)

    # bin index b means the point is positive for cutoff indices < b
    bs = np.searchsorted(tau_s, s, side="left")
    bq = np.searchsorted(tau_q, q, side="left")

    cs = np.bincount(bs, minlength=tau_s.size + 1)
    cq = np.bincount(bq, minlength=tau_q.size + 1)
    count_s = cs[::-1].cumsum()[::-1][1:]
    count_q = cq[::-1].cumsum()[::-1][1:]
    joint = _suffix_counts_2d(bs, bq, tau_s.size, tau_q.size)

    gm = GridMoments(
        tau_s=tau_s, tau_q=tau_q,
        mu_s=count_s / n, mu_q=count_q / n, mu_sq=joint / n,
        n=n, grid_desc=desc,
    )
    if labels is not None:
        y = np.asarray(labels, dtype=np.float64)
        if y.shape != s.shape:
            raise ValueError("labels must match score length")
        pos = y == 1.0
        gm.n_pos = int(pos.sum())
        gm.tp = _suffix_counts_2d(bs[pos], bq[pos], tau_s.size, tau_q.size)
    return gm


def _fbeta_matrix(gm: GridMoments, params: MetricParams, naive: bool = False) -> np.ndarray:
    feasible = gm.feasible
    out = np.full(gm.mu_sq.shape, np.nan)
    rows = np.flatnonzero(feasible.any(axis=1))

    def fill(row_idx):
        for i in row_idx:
            mask = feasible[i]
            out[i, mask] = fbeta_hat_moments(
                gm.mu_s[i], gm.mu_q[mask], gm.mu_sq[i, mask],
                beta=params.beta, alpha=params.alpha, naive=naive,
            )

    workers = min(_worker_count(), max(1, rows.size))
    if workers <= 1 or rows.size < 64:
        fill(rows)
    else:
        # rows are independent and written to disjoint slices, so the
        # result is identical for any worker count
        chunks = np.array_split(rows, workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, chunks))
    return out


@dataclass
class ScanResult:
    """Outcome of a full grid scan.

    ``fbeta`` is NaN at pairs skipped by the rate constraint; ``skipped``
    counts them. ``best`` maximizes the score over feasible pairs, ties
    broken toward the lexicographically larger (tau_s, tau_q).
    """

    best: ThresholdPair
    best_score: float
    best_index: tuple[int, int]
    tau_s: np.ndarray
    tau_q: np.ndarray
    mu_s: np.ndarray
    mu_q: np.ndarray
    mu_sq: np.ndarray
    fbeta: np.ndarray
    feasible: np.ndarray
    skipped: int
    n: int
    params: MetricParams
    grid_desc: dict

    def rate_summary(self, i: int, j: int) -> RateSummary:
        mu_s = float(self.mu_s[i])
        mu_q = float(self.mu_q[j])
        mu_sq = float(self.mu_sq[i, j])
        d = float(disagreement(mu_s, mu_q, mu_sq)) if (mu_s < 1.0 and mu_q < 1.0) else float("nan")
        return RateSummary(mu_s=mu_s, mu_q=mu_q, mu_sq=mu_sq, j=mu_sq,
                           d=d, d_naive=mu_s * mu_q, n=self.n)

    def iter_grid(self) -> Iterator[tuple[ThresholdPair, RateSummary, float]]:
        """Yield (pair, rates, fbeta_hat) for every evaluated grid pair."""
        for i in range(self.tau_s.size):
            for j in range(self.tau_q.size):
                yield (
                    ThresholdPair(float(self.tau_s[i]), float(self.tau_q[j])),
                    self.rate_summary(i, j),
                    float(self.fbeta[i, j]),
                )

    @property
    def best_rates(self) -> RateSummary:
        return self.rate_summary(*self.best_index)


def scan_thresholds(s_scores, q_scores, params: MetricParams,
                    grid_spec: GridSpec = "all-midpoints", labels=None) -> ScanResult:
    """Maximize the unsupervised F-beta over a Cartesian grid of cutoff pairs.

    Pairs with ``mu_s > 0.5`` or ``mu_q > 0.5`` are skipped, not clamped.
    Raises ``NoFeasiblePair`` when the constraint rejects the whole grid.
    Passing ``labels`` only enriches downstream exports; it never affects
    the selection.
    """
    gm = grid_moments(s_scores, q_scores, grid_spec, labels=labels)
    feasible = gm.feasible
    if not feasible.any():
        raise NoFeasiblePair("every threshold pair violates the 0.5 rate constraint")
    fbeta = _fbeta_matrix(gm, params)

    vals = np.where(feasible, fbeta, -np.inf)
    best_val = vals.max()
    candidates = np.argwhere(vals == best_val)
    i, j = candidates[-1]  # argwhere is lexicographically sorted; last = largest taus
    result = ScanResult(
        best=ThresholdPair(float(gm.tau_s[i]), float(gm.tau_q[j])),
        best_score=float(best_val),
        best_index=(int(i), int(j)),
        tau_s=gm.tau_s, tau_q=gm.tau_q,
        mu_s=gm.mu_s, mu_q=gm.mu_q, mu_sq=gm.mu_sq,
        fbeta=fbeta, feasible=feasible,
        skipped=int((~feasible).sum()),
        n=gm.n, params=params, grid_desc=gm.grid_desc,
    )
    result._grid_moments = gm  # kept for export paths that need TP counts
    return result


@dataclass(frozen=True)
class FrontierPoint:
    """One Pareto-dominant point; supervised fields are None without labels."""

    tau_s: float
    tau_q: float
    r_hat: float
    p_hat: float
    f_hat: float
    r: Optional[float] = None
    p: Optional[float] = None
    f: Optional[float] = None


def _supervised_matrices(gm: GridMoments, beta: float):
    tp = gm.tp / gm.n
    j = gm.mu_sq
    alpha_true = gm.n_pos / gm.n
    with np.errstate(divide="ignore", invalid="ignore"):
        recall = np.where(gm.n_pos > 0, tp / max(alpha_true, np.finfo(float).tiny), 0.0)
        precision = np.where(j > 0, tp / np.where(j > 0, j, 1.0), 0.0)
        if np.isinf(beta):
            f = recall
        else:
            denom = j + beta * beta * alpha_true
            f = np.where(denom > 0, (1 + beta * beta) * tp / np.where(denom > 0, denom, 1.0), 0.0)
    return recall, precision, f


def pr_frontier(s_scores, q_scores, params: MetricParams,
                grid_spec: GridSpec = "all-midpoints", labels=None) -> list[FrontierPoint]:
    """Pareto-dominant (recall_hat, precision_hat) set over all feasible pairs.

    When labels are supplied each point also carries the supervised
    (recall, precision, f) of the same pair: the "unsupervised train,
    supervised test" curve. Points are returned sorted by recall_hat.
    """
    gm = grid_moments(s_scores, q_scores, grid_spec, labels=labels)
    feasible = gm.feasible
    if not feasible.any():
        raise NoFeasiblePair("every threshold pair violates the 0.5 rate constraint")

    ii, jj = np.nonzero(feasible)
    mu_s = gm.mu_s[ii]
    mu_q = gm.mu_q[jj]
    mu_sq = gm.mu_sq[ii, jj]
    r_hat = recall_hat_moments(mu_s, mu_q, mu_sq, params.alpha)
    p_hat = precision_hat_moments(mu_s, mu_q, mu_sq)
    f_hat = fbeta_hat_moments(mu_s, mu_q, mu_sq, beta=params.beta, alpha=params.alpha)

    if labels is not None:
        r_m, p_m, f_m = _supervised_matrices(gm, params.beta)
        r_sup, p_sup, f_sup = r_m[ii, jj], p_m[ii, jj], f_m[ii, jj]

    # sort by r desc, p desc, taus desc; sweep keeping strict precision gains
    order = np.lexsort((-gm.tau_q[jj], -gm.tau_s[ii], -p_hat, -r_hat))
    points: list[FrontierPoint] = []
    best_p = -np.inf
    for k in order:
        if p_hat[k] > best_p:
            best_p = p_hat[k]
            points.append(FrontierPoint(
                tau_s=float(gm.tau_s[ii[k]]), tau_q=float(gm.tau_q[jj[k]]),
                r_hat=float(r_hat[k]), p_hat=float(p_hat[k]), f_hat=float(f_hat[k]),
                r=float(r_sup[k]) if labels is not None else None,
                p=float(p_sup[k]) if labels is not None else None,
                f=float(f_sup[k]) if labels is not None else None,
            ))
    points.sort(key=lambda pt: (pt.r_hat, pt.p_hat))
    return points


def beta_sweep_best(s_scores, q_scores, alpha: float, betas: Sequence[float],
                    grid_spec: GridSpec = "all-midpoints", labels=None) -> dict:
    """Best unsupervised/naive/supervised scores per beta over one shared grid.

    For each beta: the maximum of fbeta_hat (disagreement estimate), the
    maximum of the naive-estimate variant, the supervised F-beta of each
    of those two selected pairs (when labels are given), and the
    supervised-optimal F-beta over the same grid.
    """
    gm = grid_moments(s_scores, q_scores, grid_spec, labels=labels)
    feasible = gm.feasible
    if not feasible.any():
        raise NoFeasiblePair("every threshold pair violates the 0.5 rate constraint")
    out = {
        "beta": [], "fhat_best": [], "fhat_naive_best": [],
        "f_of_fhat_pair": [], "f_of_naive_pair": [], "f_best": [],
    }
    for beta in betas:
        params = MetricParams(alpha=alpha, beta=beta)
        fb = np.where(feasible, _fbeta_matrix(gm, params), -np.inf)
        fb_naive = np.where(feasible, _fbeta_matrix(gm, params, naive=True), -np.inf)
        out["beta"].append(beta)
        out["fhat_best"].append(float(fb.max()))
        out["fhat_naive_best"].append(float(fb_naive.max()))
        if labels is not None:
            _, _, f_m = _supervised_matrices(gm, beta)
            f_m = np.where(feasible, f_m, -np.inf)
            i, j = np.argwhere(fb == fb.max())[-1]
            out["f_of_fhat_pair"].append(float(f_m[i, j]))
            i, j = np.argwhere(fb_naive == fb_naive.max())[-1]
            out["f_of_naive_pair"].append(float(f_m[i, j]))
            out["f_best"].append(float(f_m.max()))
    return out
