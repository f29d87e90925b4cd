"""Runtime verification suites behind the ``verify`` CLI subcommand.

Each suite returns a dict with a ``passed`` flag and, on failure, a list
of named invariant violations. The suites re-derive everything they
assert: random-search baselines for the greedy construction, direct
metric evaluation for the comparison verdicts, bisection for flip
points.
"""

from __future__ import annotations

import math

import numpy as np

from . import categorical, synth, theory
from .metric import INFINITY, MetricParams, fbeta_hat_moments

DEFAULT_BETAS = (0.0, 0.5, 1.0, 2.0, INFINITY)


def _beta_repr(beta: float):
    return "inf" if math.isinf(beta) else beta


def suite_exact_bounds(seed: int, n_scenarios: int = 5, betas=DEFAULT_BETAS) -> dict:
    """Lower bounds and the naive-estimate ordering on exact tables, zero slack."""
    rng = np.random.Generator(np.random.PCG64(seed))
    failures = []
    n_checked = 0
    for k in range(n_scenarios):
        scenario = synth.random_overlap_scenario(rng)
        records = theory.verify_bounds_exact(scenario, betas=betas)
        for rec in records:
            n_checked += 1
            for check in ("fhat_le_f", "d_ge_fp", "d_le_dnaive"):
                ok = getattr(rec, check)
                if ok is False:
                    failures.append(
                        f"scenario {k}, labeling {rec.name}, beta={_beta_repr(rec.beta)}: {check} failed")
    return {"name": "exact-bounds", "passed": not failures, "checked": n_checked,
            "failures": failures}


def suite_sampled_bounds(seed: int, n: int = 20000, anomaly_frac: float = 0.05,
                         grid: int = 20, alpha: float = 0.05, beta: float = 1.0,
                         slack: float = 0.02) -> dict:
    """Finite-sample lower bound over a threshold grid on generated data."""
    ds = synth.gen_gaussian_outliers(n=n, anomaly_frac=anomaly_frac, seed=seed)
    taus_s = categorical.midpoint_taus(ds.s_scores, max_count=grid)
    taus_q = categorical.midpoint_taus(ds.q_scores, max_count=grid)
    preds = []
    for ts in taus_s:
        for tq in taus_q:
            ps, pq = categorical.apply_thresholds(
                ds.s_scores, ds.q_scores, categorical.ThresholdPair(float(ts), float(tq)))
            preds.append((f"tau=({ts:.4g},{tq:.4g})", ps, pq))
    params = MetricParams(alpha=alpha, beta=beta)
    records = theory.verify_bounds_sampled(preds, ds.labels, params, slack=slack)
    failures = []
    for rec in records:
        for check in ("fhat_le_f", "d_ge_fp", "d_le_dnaive"):
            ok = getattr(rec, check)
            if ok is False:
                failures.append(f"pair {rec.name}: {check} failed "
                                f"(fhat={rec.fbeta_hat:.4f}, f={rec.fbeta_sup:.4f})")
    return {"name": "sampled-bounds", "passed": not failures,
            "checked": len(records), "slack": slack, "failures": failures}


def suite_inner_solutions(seed: int, instances: int = 10, n_max: int = 12,
                          random_trials: int = 10000) -> dict:
    """Greedy construction vs random search; fractional level only at the tight constraint."""
    rng = np.random.Generator(np.random.PCG64(seed))
    failures = []
    for k in range(instances):
        n = int(rng.integers(4, n_max + 1))
        p_s = rng.random(n)
        p_s *= min(1.0, 0.5 / p_s.mean()) * rng.uniform(0.5, 1.0)
        gamma = float(rng.uniform(0.05, 0.5))
        sol = theory.optimal_pq_given_ps(p_s, None, gamma)
        best_random = -math.inf
        for _ in range(random_trials):
            x = rng.random(n)
            m = x.mean()
            if gamma <= m:
                x = x * (gamma / m)
            else:
                x = 1.0 - (1.0 - x) * ((1.0 - gamma) / (1.0 - m))
            best_random = max(best_random, float((x * p_s).mean()))
        if best_random > sol.mu_sq + 1e-9:
            failures.append(
                f"instance {k}: random vector beat the construction "
                f"({best_random:.12f} > {sol.mu_sq:.12f})")
        params = MetricParams(alpha=0.2, beta=float(rng.uniform(0.2, 5.0)))
        best_sol, _ = theory.best_inner_solution(p_s, None, params)
        if best_sol.rho not in (0.0, 1.0) and abs(best_sol.gamma - 0.5) > 1e-9:
            failures.append(
                f"instance {k}: fractional level rho={best_sol.rho} away from the 0.5 boundary "
                f"(gamma={best_sol.gamma})")
        gammas = np.linspace(0.0, 0.5, 26)
        curve = theory.mu_sq_star_curve(p_s, None, gammas)
        second = np.diff(curve, 2)
        if second.size and second.max() > 1e-12:
            failures.append(f"instance {k}: curve not concave (max second difference {second.max():.3g})")
        if np.any(np.diff(curve) < -1e-12):
            failures.append(f"instance {k}: curve not nondecreasing")
    return {"name": "inner-solutions", "passed": not failures, "instances": instances,
            "failures": failures}


def suite_comparison_lemma(seed: int, cases: int = 20, n_betas: int = 20) -> dict:
    """Comparison verdicts vs direct metric evaluation across beta."""
    rng = np.random.Generator(np.random.PCG64(seed))
    failures = []

    def realize(mu_sq: float, d: float) -> tuple[float, float]:
        # symmetric rates with the requested disagreement value
        root = math.sqrt(d)
        m = (mu_sq + root) / (1.0 + root)
        return m, m

    made = 0
    while made < cases:
        mu1 = float(rng.uniform(0.05, 0.45))
        mu2 = float(rng.uniform(0.05, mu1))
        d1 = float(rng.uniform(0.0, mu1 * 0.8))
        d2 = float(rng.uniform(0.0, mu2 * 0.8))
        m1 = realize(mu1, d1)[0]
        m2 = realize(mu2, d2)[0]
        if m1 > 0.5 or m2 > 0.5:
            continue
        made += 1
        alpha = float(rng.uniform(0.05, 0.5))
        a = theory.CategoricalSolution(mu_sq=mu1, d=d1)
        b = theory.CategoricalSolution(mu_sq=mu2, d=d2)
        verdict = theory.compare_solutions(a, b, alpha)
        if verdict.kind == "flip_at":
            crit = verdict.beta_crit_sq
            betas_sq = np.geomspace(max(crit * 1e-2, 1e-8), crit * 1e2, n_betas)
        else:
            betas_sq = np.geomspace(1e-3, 1e3, n_betas)
        for bsq in betas_sq:
            beta = math.sqrt(bsq)
            fa = fbeta_hat_moments(m1, m1, mu1, beta=beta, alpha=alpha)
            fb = fbeta_hat_moments(m2, m2, mu2, beta=beta, alpha=alpha)
            if verdict.kind == "equal":
                ok = abs(fa - fb) <= 1e-10
            elif verdict.kind == "b_always":
                ok = fa <= fb + 1e-10
            elif verdict.kind == "a_always":
                ok = fa >= fb - 1e-10
            else:
                near_crit = abs(bsq - verdict.beta_crit_sq) <= 1e-6 * verdict.beta_crit_sq
                ok = near_crit or ((fa > fb) == (bsq > verdict.beta_crit_sq))
            if not ok:
                failures.append(
                    f"case {made}: verdict {verdict.kind} contradicted at beta^2={bsq:.4g} "
                    f"(fa={fa:.6g}, fb={fb:.6g})")
    return {"name": "comparison-lemma", "passed": not failures, "cases": cases,
            "failures": failures}


def suite_beta_crit(seed: int, n_scenarios: int = 5, rel_tol: float = 0.01) -> dict:
    """Closed-form flip point vs the enumerated argmax; noisy q-region always flagged."""
    rng = np.random.Generator(np.random.PCG64(seed))
    failures = []
    for k in range(n_scenarios):
        scenario = synth.random_overlap_scenario(rng)
        table = synth.exact_cell_table(scenario)
        res = theory.beta_crit(scenario)
        crit = res.beta_crit_sq

        def b_label(beta_sq: float) -> float:
            params = MetricParams(alpha=scenario.p_a, beta=math.sqrt(beta_sq))
            cand, _, _ = theory.enumerate_optimal_labeling(table, scenario, params)
            return cand.p_s_regions[1]

        if b_label(crit * 0.9) != 0.0:
            failures.append(f"scenario {k}: noisy s-region labeled anomalous below the flip")
        if b_label(crit * 1.1) != 1.0:
            failures.append(f"scenario {k}: noisy s-region labeled normal above the flip")
        lo, hi = crit * 0.5, crit * 2.0
        for _ in range(60):
            mid = math.sqrt(lo * hi)
            if b_label(mid) == 0.0:
                lo = mid
            else:
                hi = mid
        empirical = math.sqrt(lo * hi)
        if abs(empirical - crit) > rel_tol * crit:
            failures.append(
                f"scenario {k}: closed-form beta_crit^2 {crit:.6g} vs empirical {empirical:.6g}")
        for beta_sq in (crit * 0.25, crit * 0.9, crit * 1.1, crit * 4.0):
            params = MetricParams(alpha=scenario.p_a, beta=math.sqrt(beta_sq))
            cand, _, _ = theory.enumerate_optimal_labeling(table, scenario, params)
            if cand.p_q_regions[1] != 1.0:
                failures.append(
                    f"scenario {k}: noisy q-region not labeled anomalous at beta^2={beta_sq:.4g}")
    return {"name": "beta-crit", "passed": not failures, "scenarios": n_scenarios,
            "failures": failures}


def run_all(seed: int, n_scenarios: int = 5, sampled_n: int = 20000, grid: int = 20) -> dict:
    """Run every suite with seeds derived from one root seed."""
    rng = np.random.Generator(np.random.PCG64(seed))
    seeds = [int(rng.integers(0, 2 ** 31)) for _ in range(5)]
    suites = [
        suite_exact_bounds(seeds[0], n_scenarios=n_scenarios),
        suite_sampled_bounds(seeds[1], n=sampled_n, grid=grid),
        suite_inner_solutions(seeds[2]),
        suite_comparison_lemma(seeds[3]),
        suite_beta_crit(seeds[4], n_scenarios=n_scenarios),
    ]
    return {"seed": seed, "passed": all(s["passed"] for s in suites), "suites": suites}
