"""Seeded generators for the package's synthetic settings.

Three families:

* Gaussian outliers: half-normal background in two views, anomalies
  shifted and coincident in both views.
* Overlap scenarios: exact cell probabilities of an anomalous set A whose
  s- and q-signatures overlap the normal set through noisy regions B and
  C, plus a sampler.
* The mnist-toy observation model: four digit classes with per-class
  blur, evaluated in closed form by enumerating display outcomes.

All sampling goes through ``numpy.random.Generator`` seeded with PCG64;
cross-run reproducibility is bitwise for a fixed seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Optional

import numpy as np

from .errors import ConstraintViolation, ScenarioInvalid
from .metric import MetricParams, fbeta_hat_moments

# s-region row order and q-region column order of every cell table
S_REGIONS = ("A\\B", "B", "Ac\\B")
Q_REGIONS = ("A\\C", "C", "Ac\\C")


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class ScoredDataset:
    """Aligned scalar scores for the two views plus ground-truth labels.

    Labels exist for evaluation only; nothing in the unsupervised path
    reads them.
    """

    s_scores: np.ndarray
    q_scores: np.ndarray
    labels: np.ndarray
    seed: int
    config: dict

    @property
    def n(self) -> int:
        return int(self.s_scores.size)


def gen_gaussian_outliers(n: int, anomaly_frac: float, offset: float = 1.0,
                          sigma_anom: float = 1.5, seed: int = 0) -> ScoredDataset:
    """Half-normal background with shifted, coincident anomalies.

    Normal points draw ``|N(0, 1)|`` independently in each view; the
    ``round(n * anomaly_frac)`` anomalous points draw
    ``offset + |N(0, sigma_anom)|`` independently in each view, at
    seed-shuffled positions. Within each class the two views are
    independent by construction.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not (0.0 <= anomaly_frac <= 0.5):
        raise ValueError(f"anomaly_frac must be in [0, 0.5], got {anomaly_frac}")
    rng = _rng(seed)
    k = int(round(n * anomaly_frac))
    anomaly_idx = rng.permutation(n)[:k]
    s = np.abs(rng.normal(0.0, 1.0, size=n))
    q = np.abs(rng.normal(0.0, 1.0, size=n))
    s[anomaly_idx] = offset + np.abs(rng.normal(0.0, sigma_anom, size=k))
    q[anomaly_idx] = offset + np.abs(rng.normal(0.0, sigma_anom, size=k))
    labels = np.zeros(n, dtype=np.float64)
    labels[anomaly_idx] = 1.0
    config = {"kind": "gaussian-outliers", "n": n, "anomaly_frac": anomaly_frac,
              "offset": offset, "sigma_anom": sigma_anom}
    return ScoredDataset(s_scores=s, q_scores=q, labels=labels, seed=seed, config=config)


@dataclass(frozen=True)
class OverlapScenario:
    """Anomalous set A overlapping the normal set through regions B (in s) and C (in q).

    ``c1..c6`` are the conditional cell masses: ``c1 = P(A\\B\\C)/P(A)``,
    ``c2 = P((A\\B) cap C)/P(A)``, ``c3 = P((A\\C) cap B)/P(A)`` and
    ``c4..c6`` the normal-class analogues. The derived cell table applies
    within-class independence of the two views, so it is determined by the
    region marginals ``c1+c2``, ``c1+c3``, ``c4+c5``, ``c4+c6`` alone.
    """

    p_a: float
    c1: float
    c2: float
    c3: float
    c4: float
    c5: float
    c6: float

    def __post_init__(self):
        if not (0.0 < self.p_a <= 0.5):
            raise ScenarioInvalid("p_a", f"P(A) must be in (0, 0.5], got {self.p_a}")
        cs = (self.c1, self.c2, self.c3, self.c4, self.c5, self.c6)
        if any(c < 0.0 for c in cs):
            raise ScenarioInvalid("cell-mass", "c constants must be nonnegative")
        if self.c1 + self.c2 + self.c3 > 1.0 + 1e-12:
            raise ScenarioInvalid("cell-mass", "c1 + c2 + c3 must not exceed 1")
        if self.c4 + self.c5 + self.c6 > 1.0 + 1e-12:
            raise ScenarioInvalid("cell-mass", "c4 + c5 + c6 must not exceed 1")
        for name, val in (("c1+c2", self.c1 + self.c2), ("c1+c3", self.c1 + self.c3),
                          ("c4+c5", self.c4 + self.c5), ("c4+c6", self.c4 + self.c6)):
            if val > 1.0 + 1e-12:
                raise ScenarioInvalid("cell-mass", f"{name} must not exceed 1")

    @classmethod
    def from_marginals(cls, p_a: float, a_clean_s: float, a_clean_q: float,
                       normal_clean_s: float, normal_clean_q: float) -> "OverlapScenario":
        """Build from the four clean-region fractions.

        ``a_clean_s = P(A\\B)/P(A)`` etc.; the c constants follow from
        within-class independence.
        """
        u1, u2, v1, v2 = a_clean_s, a_clean_q, normal_clean_s, normal_clean_q
        for name, val in (("a_clean_s", u1), ("a_clean_q", u2),
                          ("normal_clean_s", v1), ("normal_clean_q", v2)):
            if not (0.0 <= val <= 1.0):
                raise ScenarioInvalid("marginal", f"{name} must be in [0, 1], got {val}")
        return cls(p_a=p_a, c1=u1 * u2, c2=u1 * (1 - u2), c3=(1 - u1) * u2,
                   c4=v1 * v2, c5=v1 * (1 - v2), c6=(1 - v1) * v2)

    # clean-region fractions; everything downstream uses these
    @property
    def u1(self) -> float:
        return self.c1 + self.c2

    @property
    def u2(self) -> float:
        return self.c1 + self.c3

    @property
    def v1(self) -> float:
        return self.c4 + self.c5

    @property
    def v2(self) -> float:
        return self.c4 + self.c6

    @property
    def b_is_empty(self) -> bool:
        return self.u1 == 1.0 and self.v1 == 1.0

    @property
    def c_is_empty(self) -> bool:
        return self.u2 == 1.0 and self.v2 == 1.0


@dataclass(frozen=True)
class ExactOverlapTable:
    """3x3 cell probabilities over (s-region x q-region), split by true class."""

    p_a: float
    cells_anomalous: np.ndarray
    cells_normal: np.ndarray
    notes: tuple = ()

    @property
    def cells(self) -> np.ndarray:
        return self.cells_anomalous + self.cells_normal

    @property
    def marginal_s(self) -> np.ndarray:
        return self.cells.sum(axis=1)

    @property
    def marginal_q(self) -> np.ndarray:
        return self.cells.sum(axis=0)


@dataclass(frozen=True)
class TableRates:
    """Population moments of a region labeling evaluated on an exact table."""

    mu_s: float
    mu_q: float
    mu_sq: float
    tp: float
    fp: float

    @property
    def j(self) -> float:
        return self.mu_sq


def evaluate_table_labeling(table: ExactOverlapTable, p_s_regions, p_q_regions) -> TableRates:
    """Population rates for per-region prediction values (entries in [0, 1])."""
    ps = np.asarray(p_s_regions, dtype=np.float64)
    pq = np.asarray(p_q_regions, dtype=np.float64)
    if ps.shape != (3,) or pq.shape != (3,):
        raise ValueError("region labelings must have exactly 3 entries per view")
    joint = np.outer(ps, pq)
    mu_s = float(ps @ table.marginal_s)
    mu_q = float(pq @ table.marginal_q)
    mu_sq = float((joint * table.cells).sum())
    tp = float((joint * table.cells_anomalous).sum())
    fp = float((joint * table.cells_normal).sum())
    return TableRates(mu_s=mu_s, mu_q=mu_q, mu_sq=mu_sq, tp=tp, fp=fp)


def validate_scenario(scenario: OverlapScenario) -> None:
    """Check the four overlap-geometry conditions plus the view-order convention.

    Raises ``ScenarioInvalid`` naming the first failed condition. The
    conditions are checked on the independence-derived table.
    """
    p_a, u1, u2, v1, v2 = scenario.p_a, scenario.u1, scenario.u2, scenario.v1, scenario.v2
    p_ac = 1.0 - p_a
    p_a_union_b = p_a + (1.0 - v1) * p_ac
    p_a_union_c = p_a + (1.0 - v2) * p_ac
    if p_a_union_b > 0.5 + 1e-12 or p_a_union_c > 0.5 + 1e-12:
        raise ScenarioInvalid(
            "P(A u B), P(A u C) <= 0.5",
            f"got P(A u B)={p_a_union_b:.6g}, P(A u C)={p_a_union_c:.6g}")
    if u1 * u2 * p_a <= 0.0:
        raise ScenarioInvalid("P(A\\B\\C) > 0", "the doubly clean anomalous cell is empty")
    lhs = v1 * v2 * p_ac
    rhs = (v1 * p_ac) * (v2 * p_ac)
    if lhs < rhs - 1e-12:
        raise ScenarioInvalid(
            "P(Ac\\B\\C) >= P(Ac\\B) P(Ac\\C)",
            f"got {lhs:.6g} < {rhs:.6g}")
    lhs = (v1 * v2 * p_ac) * (u2 * p_a)
    rhs = (u1 * u2 * p_a) * (v2 * p_ac)
    if lhs < rhs - 1e-12:
        raise ScenarioInvalid(
            "P(Ac\\B\\C) P(A\\C) >= P(A\\B\\C) P(Ac\\C)",
            f"got {lhs:.6g} < {rhs:.6g}")
    if u1 * p_a < u2 * p_a - 1e-12:
        raise ScenarioInvalid(
            "P(A\\B) >= P(A\\C)",
            "swap the two views so the s-side clean anomalous region is the larger one")


def exact_cell_table(scenario: OverlapScenario, validate: bool = True) -> ExactOverlapTable:
    """Exact 3x3 cell probabilities using within-class view independence."""
    if validate:
        validate_scenario(scenario)
    p_a, u1, u2, v1, v2 = scenario.p_a, scenario.u1, scenario.u2, scenario.v1, scenario.v2
    a_s = np.array([u1, 1.0 - u1, 0.0])
    a_q = np.array([u2, 1.0 - u2, 0.0])
    n_s = np.array([0.0, 1.0 - v1, v1])
    n_q = np.array([0.0, 1.0 - v2, v2])
    cells_a = np.outer(a_s, np.array([a_q[0], a_q[1], 0.0])) * p_a
    cells_n = np.outer(n_s, np.array([0.0, n_q[1], n_q[2]])) * (1.0 - p_a)
    notes = []
    if scenario.b_is_empty and scenario.c_is_empty:
        notes.append("no noise, beta_crit undefined")
    return ExactOverlapTable(p_a=p_a, cells_anomalous=cells_a, cells_normal=cells_n,
                             notes=tuple(notes))


@dataclass(frozen=True)
class OverlapSample:
    """Sampled region memberships and labels from an overlap scenario.

    Regions are coded by their index in ``S_REGIONS``/``Q_REGIONS``.
    ``to_scored`` maps regions to thresholdable scores (clean anomalous
    region highest).
    """

    s_region: np.ndarray
    q_region: np.ndarray
    labels: np.ndarray
    seed: int
    scenario: OverlapScenario

    def to_scored(self) -> ScoredDataset:
        return ScoredDataset(
            s_scores=(2.0 - self.s_region).astype(np.float64),
            q_scores=(2.0 - self.q_region).astype(np.float64),
            labels=self.labels.astype(np.float64),
            seed=self.seed,
            config={"kind": "overlap-sample", "p_a": self.scenario.p_a},
        )

    def cell_frequencies(self) -> np.ndarray:
        counts = np.zeros((3, 3))
        np.add.at(counts, (self.s_region, self.q_region), 1.0)
        return counts / self.s_region.size


def sample_overlap(scenario: OverlapScenario, n: int, seed: int,
                   validate: bool = True) -> OverlapSample:
    """Draw examples with class labels and per-view region memberships."""
    if validate:
        validate_scenario(scenario)
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = _rng(seed)
    labels = (rng.random(n) < scenario.p_a).astype(np.int64)
    s_region = np.empty(n, dtype=np.int64)
    q_region = np.empty(n, dtype=np.int64)
    anom = labels == 1
    # within each class the two views are sampled independently
    s_region[anom] = np.where(rng.random(anom.sum()) < scenario.u1, 0, 1)
    q_region[anom] = np.where(rng.random(anom.sum()) < scenario.u2, 0, 1)
    norm = ~anom
    s_region[norm] = np.where(rng.random(norm.sum()) < scenario.v1, 2, 1)
    q_region[norm] = np.where(rng.random(norm.sum()) < scenario.v2, 2, 1)
    return OverlapSample(s_region=s_region, q_region=q_region, labels=labels,
                         seed=seed, scenario=scenario)


def gen_overlap_scenario(scenario: OverlapScenario, mode: str = "exact",
                         n: Optional[int] = None, seed: Optional[int] = None):
    """Exact cell table (``mode='exact'``) or sampled dataset (``mode='sampled'``)."""
    if mode == "exact":
        return exact_cell_table(scenario)
    if mode == "sampled":
        if n is None or seed is None:
            raise ValueError("sampled mode requires n and seed")
        return sample_overlap(scenario, n=n, seed=seed)
    raise ValueError(f"mode must be 'exact' or 'sampled', got {mode!r}")


def random_overlap_scenario(rng: np.random.Generator, max_tries: int = 1000,
                            require_flip: bool = True) -> OverlapScenario:
    """Rejection-sample a scenario satisfying all geometry conditions.

    With ``require_flip`` the noisy regions are nonempty with strictly
    ordered clean fractions, so the labeling flip is unique and the
    critical beta well defined.
    """
    for _ in range(max_tries):
        p_a = rng.uniform(0.05, 0.3)
        u2 = rng.uniform(0.5, 0.9)
        u1 = rng.uniform(u2 + 0.02, 0.95)
        v1 = rng.uniform(max(u1, 0.9), 0.995)
        v2 = rng.uniform(0.85, 0.995)
        try:
            scen = OverlapScenario.from_marginals(p_a, u1, u2, v1, v2)
            validate_scenario(scen)
        except ScenarioInvalid:
            continue
        if require_flip:
            if (1 - v1) * (1 - v2) == 0.0:
                continue
            if (1 - u1) <= (1 - v1) * (1 - v2):  # z would be <= 0
                continue
        return scen
    raise RuntimeError("could not sample a valid overlap scenario")


@dataclass(frozen=True)
class MnistToyModel:
    """Closed-form observation model for the four-digit toy task.

    An example of anomalous class ``i`` (1..3) shows digit ``i`` in each
    view independently, blurred to digit 0 with probability ``b[i]``.
    Normal examples (class 0) always show digit 0 under the default
    reading; with ``normal_blur=True`` they symmetrically show digit ``i``
    with probability ``b[i]`` instead.
    """

    w: tuple = (0.85, 0.05, 0.05, 0.05)
    b: tuple = (0.0, 0.0, 0.05, 0.2)
    normal_blur: bool = False

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if w.shape != (4,) or b.shape != (4,):
            raise ValueError("w and b must each have 4 entries (digit classes 0..3)")
        if abs(w.sum() - 1.0) > 1e-12 or w.min() < 0.0:
            raise ValueError("class frequencies w must be nonnegative and sum to 1")
        if b[0] != 0.0:
            raise ValueError("b[0] must be 0 (the normal digit is never blurred to itself)")
        if b.min() < 0.0 or b.max() > 1.0:
            raise ValueError("blur probabilities must lie in [0, 1]")
        if self.normal_blur and b[1:].sum() > 1.0 + 1e-12:
            raise ValueError("normal_blur reading requires b1 + b2 + b3 <= 1")
        object.__setattr__(self, "w", tuple(float(x) for x in w))
        object.__setattr__(self, "b", tuple(float(x) for x in b))

    def display_distribution(self, true_class: int) -> np.ndarray:
        """Per-view probability of each displayed digit for one true class."""
        dist = np.zeros(4)
        if true_class == 0:
            if self.normal_blur:
                dist[1:] = self.b[1:]
                dist[0] = 1.0 - dist[1:].sum()
            else:
                dist[0] = 1.0
        else:
            dist[0] = self.b[true_class]
            dist[true_class] = 1.0 - self.b[true_class]
        return dist

    def moments(self, labeling) -> tuple[float, float, float]:
        """(mu_s, mu_q, mu_sq) for a per-digit labeling, by outcome enumeration."""
        y = _check_labeling(labeling)
        mu = 0.0
        mu_sq = 0.0
        for cls in range(4):
            dist = self.display_distribution(cls)
            e = float(dist @ y)  # each view shows an anomalous-labeled digit w.p. e
            mu += self.w[cls] * e
            mu_sq += self.w[cls] * e * e  # views are independent given the class
        return mu, mu, mu_sq

    def supervised_moments(self, labeling) -> tuple[float, float]:
        """(tp, fp) fractions of the joint prediction against true classes."""
        y = _check_labeling(labeling)
        tp = 0.0
        fp = 0.0
        for cls in range(4):
            dist = self.display_distribution(cls)
            e = float(dist @ y)
            if cls == 0:
                fp += self.w[cls] * e * e
            else:
                tp += self.w[cls] * e * e
        return tp, fp


def _check_labeling(labeling) -> np.ndarray:
    y = np.asarray(labeling, dtype=np.float64)
    if y.shape != (4,) or not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("labeling must be 4 binary entries, one per digit class")
    if y[0] != 0.0:
        raise ValueError("labeling must keep the normal digit (class 0) non-anomalous")
    return y


def labeling_fbeta(model: MnistToyModel, labeling, params: MetricParams) -> float:
    """Unsupervised F-beta of a digit labeling under the toy model.

    Raises ``ConstraintViolation`` when the labeling pushes the mean rate
    above 0.5 (such labelings are infeasible for the metric).
    """
    mu_s, mu_q, mu_sq = model.moments(labeling)
    if mu_s > 0.5 or mu_q > 0.5:
        raise ConstraintViolation(
            f"labeling {tuple(int(v) for v in np.asarray(labeling))} gives mean rate {mu_s:.4g} > 0.5")
    return float(fbeta_hat_moments(mu_s, mu_q, mu_sq, beta=params.beta, alpha=params.alpha))


@dataclass(frozen=True)
class LabelingScore:
    labeling: tuple
    feasible: bool
    fbeta_hat: float
    mu_s: float
    mu_sq: float


def enumerate_labelings(model: MnistToyModel, params: MetricParams) -> tuple[LabelingScore, list[LabelingScore]]:
    """Score all 8 labelings with y0 = 0; return (best, all).

    Infeasible labelings (mean rate above 0.5) are marked and never win.
    Ties break toward the larger joint-event rate, then the labeling that
    flags more digit classes.
    """
    scores = []
    for bits in product((0, 1), repeat=3):
        labeling = (0,) + bits
        mu_s, _, mu_sq = model.moments(labeling)
        feasible = mu_s <= 0.5
        fb = float(fbeta_hat_moments(mu_s, mu_s, mu_sq, beta=params.beta, alpha=params.alpha)) if feasible else math.nan
        scores.append(LabelingScore(labeling=labeling, feasible=feasible,
                                    fbeta_hat=fb, mu_s=mu_s, mu_sq=mu_sq))
    feasible_scores = [s for s in scores if s.feasible]
    if not feasible_scores:
        raise ConstraintViolation("every labeling violates the 0.5 rate constraint")
    best = max(feasible_scores, key=lambda s: (s.fbeta_hat, s.mu_sq, s.labeling))
    return best, scores


@dataclass(frozen=True)
class LabelingRegime:
    """A maximal beta range over which one labeling is the argmax."""

    labeling: tuple
    beta_lo: float
    beta_hi: float


def sweep_labeling_regimes(model: MnistToyModel, alpha: float, beta_min: float = 1e-3,
                           beta_max: float = 1e3, points: int = 200) -> list[LabelingRegime]:
    """Argmax labeling as beta sweeps a log grid, with bisected boundaries."""
    if not (0.0 < beta_min < beta_max):
        raise ValueError("need 0 < beta_min < beta_max")
    betas = np.geomspace(beta_min, beta_max, points)

    def argmax(beta: float) -> tuple:
        best, _ = enumerate_labelings(model, MetricParams(alpha=alpha, beta=beta))
        return best.labeling

    labels = [argmax(b) for b in betas]
    regimes: list[LabelingRegime] = []
    start = betas[0]
    for k in range(1, len(betas)):
        if labels[k] != labels[k - 1]:
            lo, hi = betas[k - 1], betas[k],
            for _ in range(60):  # bisect the boundary in log space
                mid = math.sqrt(lo * hi)
                if argmax(mid) == labels[k - 1]:
                    lo = mid
                else:
                    hi = mid
            boundary = math.sqrt(lo * hi)
            regimes.append(LabelingRegime(labeling=labels[k - 1], beta_lo=float(start),
                                          beta_hi=float(boundary)))
            start = boundary
    regimes.append(LabelingRegime(labeling=labels[-1], beta_lo=float(start), beta_hi=float(betas[-1])))
    return regimes
