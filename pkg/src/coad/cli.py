"""Command-line surface tying generators, scans, training, and verification together.

Subcommands: ``gen``, ``scan``, ``frontier``, ``train``, ``eval``,
``verify``, ``mnist-toy``. Exit codes: 0 success, 1 usage or input
error, 2 constraint or verification failure.

Every command accepts ``--config FILE`` with a JSON document of
parameter overrides (unknown keys rejected); explicit flags win over the
config, the config wins over defaults. The effective configuration is
echoed into each JSON artifact, and as a ``<out>.meta.json`` sidecar
next to each CSV. Commands that draw randomness require an explicit
``--seed``. Report commands render a PNG figure next to the delimited
output unless ``--no-plot`` is given.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, categorical, continuous, suites, synth
from .data import PairedDataset, from_scored, read_dataset_csv, write_dataset_csv, write_table
from .errors import CoadError
from .metric import (
    INFINITY,
    MetricParams,
    compute_rates,
    f_beta_hat,
    supervised_f_beta,
    supervised_precision_recall,
)

PRESETS = {
    "paper-4.1": {"kind": "gaussian", "n": 20000, "frac": 0.05, "offset": 1.0,
                  "sigma_anom": 1.5},
    "paper-overlap-demo": {"kind": "overlap", "p_a": 0.2, "a_clean_s": 0.9,
                           "a_clean_q": 0.85, "normal_clean_s": 0.95,
                           "normal_clean_q": 0.92, "n": 20000},
    "paper-mnist-toy": {"w": "0.85,0.05,0.05,0.05", "b": "0,0,0.05,0.2", "alpha": 0.15},
}


def _parse_beta(text: str) -> float:
    if text.lower() in ("inf", "infinity"):
        return INFINITY
    return float(text)


def _parse_grid(text: str):
    if text == "all":
        return "all-midpoints"
    return int(text)


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip() != ""]


def _write_meta(out_path, effective: dict) -> None:
    meta = {"tool": "coad", "version": __version__, "config": effective}
    Path(str(out_path) + ".meta.json").write_text(
        json.dumps(meta, indent=2, default=str) + "\n", encoding="utf-8")


def _apply_config(args, parser, allowed: dict) -> None:
    """Merge a JSON config under explicit flags; reject unknown keys."""
    if not getattr(args, "config", None):
        return
    path = Path(args.config)
    if not path.exists():
        raise ValueError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON ({exc})")
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise ValueError(f"{path}: unknown config keys {unknown}; allowed: {sorted(allowed)}")
    for key, value in doc.items():
        dest = allowed[key]
        if getattr(args, dest) == args._sp.get_default(dest):
            setattr(args, dest, value)


def _require_seed(args) -> int:
    if args.seed is None:
        raise ValueError("a --seed is required: all randomness must be explicit")
    return int(args.seed)


def _load_scores(path):
    ds = read_dataset_csv(path)
    s, q = ds.scores
    return ds, s, q


# ---------------------------------------------------------------------------
# subcommand handlers
# ---------------------------------------------------------------------------

def cmd_gen(args, parser) -> int:
    _apply_config(args, parser, {k: k for k in (
        "preset", "kind", "n", "frac", "offset", "sigma_anom", "seed", "p_a",
        "a_clean_s", "a_clean_q", "normal_clean_s", "normal_clean_q")})
    if args.preset:
        if args.preset not in ("paper-4.1", "paper-overlap-demo"):
            raise ValueError(f"unknown gen preset {args.preset!r}")
        for key, value in PRESETS[args.preset].items():
            setattr(args, key, value)
    seed = _require_seed(args)
    if args.kind == "gaussian":
        ds = synth.gen_gaussian_outliers(
            n=args.n, anomaly_frac=args.frac, offset=args.offset,
            sigma_anom=args.sigma_anom, seed=seed)
        paired = from_scored(ds)
    elif args.kind == "overlap":
        scenario = synth.OverlapScenario.from_marginals(
            args.p_a, args.a_clean_s, args.a_clean_q,
            args.normal_clean_s, args.normal_clean_q)
        sample = synth.sample_overlap(scenario, n=args.n, seed=seed)
        paired = from_scored(sample.to_scored())
    else:
        raise ValueError(f"unknown --kind {args.kind!r} (expected gaussian or overlap)")
    write_dataset_csv(paired, args.out)
    effective = {"command": "gen", "preset": args.preset, "seed": seed,
                 **paired.metadata}
    _write_meta(args.out, effective)
    n_pos = int(paired.labels.sum()) if paired.labels is not None else 0
    print(f"wrote {paired.n} rows ({n_pos} anomalous) to {args.out}")
    return 0


def cmd_scan(args, parser) -> int:
    _apply_config(args, parser, {k: k for k in ("alpha", "beta", "grid")})
    ds, s, q = _load_scores(args.inp)
    params = MetricParams(alpha=args.alpha, beta=_parse_beta(str(args.beta)))
    grid = _parse_grid(str(args.grid))
    result = categorical.scan_thresholds(s, q, params, grid_spec=grid, labels=ds.labels)
    effective = {"command": "scan", "input": str(args.inp), "alpha": params.alpha,
                 "beta": "inf" if math.isinf(params.beta) else params.beta,
                 "grid": result.grid_desc}
    doc = {
        "config": effective,
        "n": result.n,
        "best": {"tau_s": result.best.tau_s, "tau_q": result.best.tau_q},
        "best_score": result.best_score,
        "best_rates": {
            "mu_s": result.best_rates.mu_s, "mu_q": result.best_rates.mu_q,
            "mu_sq": result.best_rates.mu_sq, "d": result.best_rates.d,
            "d_naive": result.best_rates.d_naive,
        },
        "grid_size": [int(result.tau_s.size), int(result.tau_q.size)],
        "skipped": result.skipped,
    }
    if ds.labels is not None:
        ps, pq = categorical.apply_thresholds(s, q, result.best)
        doc["best_supervised_f"] = supervised_f_beta(ps, pq, ds.labels, params.beta)
    Path(args.out_json).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    print(f"best pair tau_s={result.best.tau_s:.6g} tau_q={result.best.tau_q:.6g} "
          f"score={result.best_score:.6g} ({result.skipped} pairs skipped)")
    if args.out_grid:
        _export_grid_csv(result, ds.labels, s, q, args.out_grid)
        _write_meta(args.out_grid, effective)
    if not args.no_plot:
        from . import plots
        fig_path = Path(args.out_json).with_suffix(".png")
        plots.plot_scan_heatmap(result, fig_path)
        print(f"figure: {fig_path}")
    return 0


def _export_grid_csv(result, labels, s, q, out_path) -> None:
    from .metric import precision_hat_moments, recall_hat_moments

    feasible = result.feasible
    ii, jj = np.nonzero(feasible)
    mu_s = result.mu_s[ii]
    mu_q = result.mu_q[jj]
    mu_sq = result.mu_sq[ii, jj]
    cols = [
        ("tau_s", list(result.tau_s[ii])),
        ("tau_q", list(result.tau_q[jj])),
        ("R_hat", list(recall_hat_moments(mu_s, mu_q, mu_sq, result.params.alpha))),
        ("P_hat", list(precision_hat_moments(mu_s, mu_q, mu_sq))),
        ("F_hat", list(result.fbeta[ii, jj])),
    ]
    if labels is not None:
        gm = result._grid_moments
        r_m, p_m, f_m = categorical._supervised_matrices(gm, result.params.beta)
        cols += [("R", list(r_m[ii, jj])), ("P", list(p_m[ii, jj])), ("F", list(f_m[ii, jj]))]
    write_table(out_path, cols)


def cmd_frontier(args, parser) -> int:
    _apply_config(args, parser, {k: k for k in ("alpha", "beta", "grid")})
    ds, s, q = _load_scores(args.inp)
    params = MetricParams(alpha=args.alpha, beta=_parse_beta(str(args.beta)))
    grid = _parse_grid(str(args.grid))
    points = categorical.pr_frontier(s, q, params, grid_spec=grid, labels=ds.labels)
    cols = [
        ("tau_s", [p.tau_s for p in points]),
        ("tau_q", [p.tau_q for p in points]),
        ("R_hat", [p.r_hat for p in points]),
        ("P_hat", [p.p_hat for p in points]),
        ("F_hat", [p.f_hat for p in points]),
    ]
    if ds.labels is not None:
        cols += [("R", [p.r for p in points]), ("P", [p.p for p in points]),
                 ("F", [p.f for p in points])]
    write_table(args.out, cols)
    effective = {"command": "frontier", "input": str(args.inp), "alpha": params.alpha,
                 "beta": "inf" if math.isinf(params.beta) else params.beta,
                 "grid": str(args.grid)}
    _write_meta(args.out, effective)
    print(f"frontier: {len(points)} points -> {args.out}")
    if not args.no_plot:
        from . import plots
        fig_path = Path(args.out).with_suffix(".png")
        plots.plot_frontier(points, fig_path)
        print(f"figure: {fig_path}")
    return 0


def cmd_train(args, parser) -> int:
    _apply_config(args, parser, {k: k for k in (
        "alpha", "beta", "epochs", "lr", "batch_size", "lambda_wall", "lambda_mag",
        "wall_temperature", "val_fraction", "patience", "hidden", "seed")})
    seed = _require_seed(args)
    ds = read_dataset_csv(args.inp)
    params = MetricParams(alpha=args.alpha, beta=_parse_beta(str(args.beta)))
    if args.lambda_wall is None:
        args.lambda_wall = 1.0 / params.alpha
    hidden = tuple(int(h) for h in str(args.hidden).split(",") if h.strip())
    config = continuous.TrainConfig(
        params=params, learning_rate=args.lr, epochs=args.epochs,
        batch_size=args.batch_size, lambda_wall=args.lambda_wall,
        lambda_mag=args.lambda_mag, wall_temperature=args.wall_temperature,
        validation_fraction=args.val_fraction, early_stop_patience=args.patience,
        seed=seed, hidden=hidden)
    pair, history = continuous.train(ds, config)
    effective = {"command": "train", "input": str(args.inp), "alpha": params.alpha,
                 "beta": "inf" if math.isinf(params.beta) else params.beta,
                 "learning_rate": config.learning_rate, "epochs": config.epochs,
                 "batch_size": config.batch_size, "lambda_wall": config.lambda_wall,
                 "lambda_mag": config.lambda_mag, "wall_temperature": config.wall_temperature,
                 "validation_fraction": config.validation_fraction,
                 "early_stop_patience": config.early_stop_patience,
                 "hidden": list(hidden), "seed": seed}
    continuous.save_mlp_pair(pair, args.out_model, config_echo=effective)
    write_table(args.out_history, [
        ("epoch", [e.epoch for e in history.epochs]),
        ("train_loss", [e.train_loss for e in history.epochs]),
        ("val_fbeta_hat", [e.val_fbeta for e in history.epochs]),
        ("val_mu_s", [e.val_mu_s for e in history.epochs]),
        ("val_mu_q", [e.val_mu_q for e in history.epochs]),
        ("val_mu_sq", [e.val_mu_sq for e in history.epochs]),
    ])
    _write_meta(args.out_history, effective)
    best = history.best_epoch
    best_f = history.epochs[best].val_fbeta if best >= 0 else float("nan")
    print(f"trained {len(history.epochs)} epochs; best epoch {best} "
          f"(validation score {best_f:.6g}); stopped: {history.stopping_reason}")
    if not args.no_plot and history.epochs:
        from . import plots
        fig_path = Path(args.out_history).with_suffix(".png")
        plots.plot_history(history, fig_path)
        print(f"figure: {fig_path}")
    return 0


def cmd_eval(args, parser) -> int:
    _apply_config(args, parser, {k: k for k in ("alpha", "beta", "tau_s", "tau_q")})
    ds = read_dataset_csv(args.inp)
    params = MetricParams(alpha=args.alpha, beta=_parse_beta(str(args.beta)))
    if args.model:
        pair = continuous.load_mlp_pair(args.model)
        p_s = continuous.forward(pair.net_s, ds.s)
        p_q = continuous.forward(pair.net_q, ds.q)
        source = {"model": str(args.model)}
    elif args.tau_s is not None and args.tau_q is not None:
        s, q = ds.scores
        p_s, p_q = categorical.apply_thresholds(
            s, q, categorical.ThresholdPair(args.tau_s, args.tau_q))
        source = {"tau_s": args.tau_s, "tau_q": args.tau_q}
    else:
        raise ValueError("eval needs either --model or both --tau-s and --tau-q")

    rates = compute_rates(p_s, p_q)
    effective = {"command": "eval", "input": str(args.inp), "alpha": params.alpha,
                 "beta": "inf" if math.isinf(params.beta) else params.beta, **source}
    cols = [("p_s", list(p_s)), ("p_q", list(p_q)), ("p_joint", list(p_s * p_q))]
    if ds.labels is not None:
        cols.append(("label", [int(v) for v in ds.labels]))
    write_table(args.out_predictions, cols)
    _write_meta(args.out_predictions, effective)

    report = {
        "config": effective,
        "n": rates.n,
        "rates": {"mu_s": rates.mu_s, "mu_q": rates.mu_q, "mu_sq": rates.mu_sq,
                  "j": rates.j, "d": rates.d, "d_naive": rates.d_naive},
        "notes": [],
    }
    if rates.at_constraint_boundary:
        report["notes"].append("a mean rate sits exactly on the 0.5 constraint boundary")
    report["fbeta_hat"] = f_beta_hat(rates, params)  # ConstraintViolation -> exit 2
    if ds.labels is not None and np.all((p_s == 0) | (p_s == 1)) and np.all((p_q == 0) | (p_q == 1)):
        recall, precision = supervised_precision_recall(p_s, p_q, ds.labels)
        report["supervised"] = {
            "f_beta": supervised_f_beta(p_s, p_q, ds.labels, params.beta),
            "precision": precision, "recall": recall,
        }
    Path(args.out_report).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    print(f"fbeta_hat={report['fbeta_hat']:.6g} (mu_s={rates.mu_s:.4g}, "
          f"mu_q={rates.mu_q:.4g}, mu_sq={rates.mu_sq:.4g})")
    return 0


def cmd_verify(args, parser) -> int:
    _apply_config(args, parser, {k: k for k in ("scenarios", "sampled_n", "grid", "seed")})
    seed = _require_seed(args)
    report = suites.run_all(seed, n_scenarios=args.scenarios, sampled_n=args.sampled_n,
                            grid=args.grid)
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    for suite in report["suites"]:
        status = "PASS" if suite["passed"] else "FAIL"
        print(f"[{status}] {suite['name']}")
        for failure in suite["failures"]:
            print(f"    {failure}", file=sys.stderr)
    if not report["passed"]:
        print("verification FAILED", file=sys.stderr)
        return 2
    print("all verification suites passed")
    return 0


def cmd_mnist_toy(args, parser) -> int:
    _apply_config(args, parser, {k: k for k in (
        "preset", "w", "b", "alpha", "beta_min", "beta_max", "points", "normal_blur")})
    if args.preset:
        if args.preset != "paper-mnist-toy":
            raise ValueError(f"unknown mnist-toy preset {args.preset!r}")
        for key, value in PRESETS[args.preset].items():
            if getattr(args, key) == args._sp.get_default(key):
                setattr(args, key, value)
    w = tuple(_float_list(str(args.w)))
    b = tuple(_float_list(str(args.b)))
    model = synth.MnistToyModel(w=w, b=b, normal_blur=args.normal_blur)
    regimes = synth.sweep_labeling_regimes(
        model, alpha=args.alpha, beta_min=args.beta_min, beta_max=args.beta_max,
        points=args.points)
    cols = [
        ("y0", [r.labeling[0] for r in regimes]),
        ("y1", [r.labeling[1] for r in regimes]),
        ("y2", [r.labeling[2] for r in regimes]),
        ("y3", [r.labeling[3] for r in regimes]),
        ("beta_lo", [r.beta_lo for r in regimes]),
        ("beta_hi", [r.beta_hi for r in regimes]),
    ]
    write_table(args.out, cols)
    effective = {"command": "mnist-toy", "w": list(w), "b": list(b), "alpha": args.alpha,
                 "beta_min": args.beta_min, "beta_max": args.beta_max,
                 "points": args.points, "normal_blur": args.normal_blur}
    _write_meta(args.out, effective)
    for r in regimes:
        lab = "".join(str(v) for v in r.labeling)
        print(f"labeling {lab}: beta in [{r.beta_lo:.6g}, {r.beta_hi:.6g}]")
    if not args.no_plot:
        from . import plots
        fig_path = Path(args.out).with_suffix(".png")
        plots.plot_labeling_regimes(model, args.alpha, regimes, fig_path,
                                    beta_min=args.beta_min, beta_max=args.beta_max)
        print(f"figure: {fig_path}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coad", description="Coincidence-based unsupervised anomaly detection toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON file with parameter overrides")

    p = sub.add_parser("gen", help="generate a synthetic dataset CSV")
    add_common(p)
    p.add_argument("--preset", choices=["paper-4.1", "paper-overlap-demo"])
    p.add_argument("--kind", default="gaussian", choices=["gaussian", "overlap"])
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--frac", type=float, default=0.05)
    p.add_argument("--offset", type=float, default=1.0)
    p.add_argument("--sigma-anom", dest="sigma_anom", type=float, default=1.5)
    p.add_argument("--p-a", dest="p_a", type=float, default=0.2)
    p.add_argument("--a-clean-s", dest="a_clean_s", type=float, default=0.9)
    p.add_argument("--a-clean-q", dest="a_clean_q", type=float, default=0.85)
    p.add_argument("--normal-clean-s", dest="normal_clean_s", type=float, default=0.95)
    p.add_argument("--normal-clean-q", dest="normal_clean_q", type=float, default=0.92)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_gen, _sp=p)

    p = sub.add_parser("scan", help="two-threshold grid scan maximizing the unsupervised score")
    add_common(p)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", default="1")
    p.add_argument("--grid", default="all", help="'all' or a per-axis cutoff count")
    p.add_argument("--out-json", dest="out_json", default="scan.json")
    p.add_argument("--out-grid", dest="out_grid", help="optional CSV of all feasible grid pairs")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(handler=cmd_scan, _sp=p)

    p = sub.add_parser("frontier", help="Pareto precision-recall frontier CSV")
    add_common(p)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", default="1")
    p.add_argument("--grid", default="all")
    p.add_argument("--out", required=True)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(handler=cmd_frontier, _sp=p)

    p = sub.add_parser("train", help="train a detector pair end to end")
    add_common(p)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", default="1")
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=256)
    p.add_argument("--lambda-wall", dest="lambda_wall", type=float, default=None)
    p.add_argument("--lambda-mag", dest="lambda_mag", type=float, default=1e-4)
    p.add_argument("--wall-temperature", dest="wall_temperature", type=float, default=50.0)
    p.add_argument("--val-fraction", dest="val_fraction", type=float, default=0.2)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--hidden", default="8,8")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-model", dest="out_model", required=True)
    p.add_argument("--out-history", dest="out_history", required=True)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(handler=cmd_train, _sp=p)

    p = sub.add_parser("eval", help="apply a saved model or thresholds to a dataset")
    add_common(p)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--model")
    p.add_argument("--tau-s", dest="tau_s", type=float)
    p.add_argument("--tau-q", dest="tau_q", type=float)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", default="1")
    p.add_argument("--out-predictions", dest="out_predictions", default="predictions.csv")
    p.add_argument("--out-report", dest="out_report", default="report.json")
    p.set_defaults(handler=cmd_eval, _sp=p)

    p = sub.add_parser("verify", help="run the structural verification suites")
    add_common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--scenarios", type=int, default=5)
    p.add_argument("--sampled-n", dest="sampled_n", type=int, default=20000)
    p.add_argument("--grid", type=int, default=20)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_verify, _sp=p)

    p = sub.add_parser("mnist-toy", help="beta sweep of the toy observation model's best labeling")
    add_common(p)
    p.add_argument("--preset", choices=["paper-mnist-toy"])
    p.add_argument("--w", default="0.85,0.05,0.05,0.05")
    p.add_argument("--b", default="0,0,0.05,0.2")
    p.add_argument("--alpha", type=float, default=0.15)
    p.add_argument("--beta-min", dest="beta_min", type=float, default=1e-3)
    p.add_argument("--beta-max", dest="beta_max", type=float, default=1e3)
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--normal-blur", dest="normal_blur", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(handler=cmd_mnist_toy, _sp=p)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage problems; this tool reserves 2 for
        # constraint/verification failures
        return 0 if exc.code == 0 else 1
    try:
        return args.handler(args, parser)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except CoadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
