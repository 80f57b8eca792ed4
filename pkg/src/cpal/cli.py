"""Command-line entry point: ``cpal <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

import numpy as np

from .active_learning import (ALConfig, InfeasibleError, Pool, al_inexact, al_limited_queries,
                              al_query_synthesis, al_regression, linear_al_classification,
                              linear_al_regression, train_cutting_plane)
from .data import gen_quadratic, gen_spiral, load_csv_dataset, save_csv
from .experiments import ExperimentConfig, report, run_experiment
from .final_solve import solve_group_lasso
from .localization import LocalizationSet
from .patterns import PatternSet, enumerate_patterns_exact, sample_patterns
from .relu_model import reconstruct_weights_two_layer
from .volumetrics import gruenbaum_check

AL_ALGOS = ("train", "qs", "lq", "inexact", "reg", "linear-cls", "linear-reg")


def _on_off(v: str) -> bool:
    if v not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return v == "on"


def _rows(v: str) -> list[int]:
    try:
        return [int(t) for t in v.replace(" ", "").split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad row list {v!r}") from None


def cmd_enumerate_patterns(a) -> int:
    ds = load_csv_dataset(a.data, split_frac=a.split_frac, seed=a.seed)
    X = ds.X if a.all_rows else ds.X_train
    if a.mode == "exact":
        ps = enumerate_patterns_exact(X)
    else:
        ps = sample_patterns(X, a.target, a.simulations, a.seed)
    ps.to_json(a.out)
    print(f"{ps.P} patterns over {ps.n} rows" + (" (shortfall)" if ps.shortfall else ""))
    return 0


def cmd_volumetrics(a) -> int:
    L = LocalizationSet.from_json(a.set)
    rep = gruenbaum_check(L, a.samples, a.seed, a.burn_in)
    with open(a.report, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ratio", "stderr", "samples", "bound", "exact_bound", "passed"])
        w.writerow([repr(rep.ratio), repr(rep.stderr), rep.n_samples, repr(rep.bound),
                    repr(rep.exact_bound), int(rep.passed)])
    print(f"max side ratio {rep.ratio:.4f} +- {rep.stderr:.4f}: {'pass' if rep.passed else 'FAIL'}")
    return 0 if rep.passed else 1


def cmd_al_run(a) -> int:
    ds = load_csv_dataset(a.data, split_frac=a.split_frac, seed=a.seed)
    conf = ALConfig(budget=a.budget, margin=a.margin, eps=a.eps, seed=a.seed,
                    final_solve=a.final_solve, beta=a.beta, radius=a.radius)
    if not a.algo.startswith("linear") and not a.patterns:
        raise ValueError(f"--patterns is required for --algo {a.algo}")
    ps = None if a.algo.startswith("linear") else PatternSet.from_json(a.patterns)
    try:
        if a.algo == "train":
            res = train_cutting_plane(ds.X_train, ds.y_train, ps, conf, dataset=ds)
        elif a.algo == "qs":
            res = al_query_synthesis(Pool(ds.X_train, ds.y_train, None, ds.train), ps, conf, dataset=ds)
        elif a.algo == "lq":
            res = al_limited_queries(ds, ps, conf)
        elif a.algo == "inexact":
            res = al_inexact(ds, ps, conf)
        elif a.algo == "reg":
            res = al_regression(ds, ps, conf)
        elif a.algo == "linear-cls":
            res = linear_al_classification(ds, conf)
        else:
            res = linear_al_regression(ds, conf)
    except InfeasibleError as err:
        res = err.result
    if a.trace:
        res.trace.to_csv(a.trace)
    if a.model:
        if ps is None:
            with open(a.model, "w") as fh:
                json.dump({"kind": "linear", "theta": np.asarray(res.theta).tolist()}, fh)
        else:
            reconstruct_weights_two_layer(res.theta, ps).to_json(a.model)
    print(f"status {res.status}, {len(res.rows)} rows collected, "
          f"train {res.metrics.get('train')}, test {res.metrics.get('test')}")
    ok = res.status != "infeasible" or a.algo == "linear-reg"
    return 0 if ok else 2


def cmd_final_solve(a) -> int:
    ds = load_csv_dataset(a.data, split_frac=0.0)
    ps = PatternSet.from_json(a.patterns)
    rows = np.asarray(a.rows, dtype=int)
    if rows.size == 0 or rows.min() < 0 or rows.max() >= ds.n:
        raise SystemExit(f"rows must be non-empty indices into the {ds.n} data rows")
    rep = solve_group_lasso(ds.X[rows], ds.y[rows], ps, a.beta)
    with open(a.out, "w") as fh:
        json.dump(rep.to_dict(), fh)
    print(f"objective {rep.objective:.6g}, max violation {rep.constraint_violation_max:.2e}, "
          f"converged {rep.converged}")
    return 0


def cmd_gen_data(a) -> int:
    if a.task == "spiral":
        ds = gen_spiral(a.k1, a.k2, a.k3, a.k4, a.k5, a.n_shape, a.n_points, a.seed, a.turns)
    else:
        ds = gen_quadratic(a.n_points, a.lo, a.hi, a.seed)
    save_csv(ds, a.out)
    print(f"wrote {ds.n} rows to {a.out}")
    return 0


def cmd_report(a) -> int:
    rows = report(a.traces, a.out, a.metric)
    print(f"wrote {len(rows)} summary rows to {a.out}")
    return 0


def cmd_run_experiment(a) -> int:
    res = run_experiment(ExperimentConfig.from_json(a.config))
    for r in res.runs:
        print(f"seed {r['seed']}: {r['status']} train {r['metrics'].get('train')} "
              f"test {r['metrics'].get('test')}")
    print(f"summary: {res.summary_path}")
    return 0 if res.ok else 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cpal", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("enumerate-patterns", help="sample or enumerate activation patterns")
    s.add_argument("--data", required=True)
    s.add_argument("--mode", choices=("sample", "exact"), default="sample")
    s.add_argument("--target", type=int)
    s.add_argument("--simulations", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0, help="split and sampling seed")
    s.add_argument("--split-frac", type=float, default=0.2)
    s.add_argument("--all-rows", action="store_true", help="use every row instead of the train split")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_enumerate_patterns)

    s = sub.add_parser("volumetrics", help="centroid-cut check on a localization set")
    s.add_argument("--set", required=True)
    s.add_argument("--samples", type=int, default=10_000)
    s.add_argument("--burn-in", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--report", required=True)
    s.set_defaults(fn=cmd_volumetrics)

    s = sub.add_parser("al-run", help="run one cutting-plane loop")
    s.add_argument("--algo", choices=AL_ALGOS, required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--patterns")
    s.add_argument("--budget", type=int, default=20)
    s.add_argument("--margin", type=float, choices=(0.0, 1.0), default=0.0)
    s.add_argument("--eps", type=float, default=1e-3)
    s.add_argument("--radius", type=float, default=1.0, help="radius of the initial ball")
    s.add_argument("--beta", type=float, default=1e-3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--split-frac", type=float, default=0.2)
    s.add_argument("--final-solve", type=_on_off, default=False)
    s.add_argument("--trace")
    s.add_argument("--model")
    s.set_defaults(fn=cmd_al_run)

    s = sub.add_parser("final-solve", help="group-lasso solve over selected rows")
    s.add_argument("--data", required=True)
    s.add_argument("--rows", type=_rows, required=True, help="comma-separated row indices")
    s.add_argument("--patterns", required=True)
    s.add_argument("--beta", type=float, default=1e-3)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_final_solve)

    s = sub.add_parser("gen-data", help="write a synthetic dataset as CSV")
    s.add_argument("--task", choices=("spiral", "quadratic"), required=True)
    s.add_argument("--n-points", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--k1", type=float, default=13.0)
    s.add_argument("--k2", type=float, default=0.5)
    s.add_argument("--k3", type=float, default=1.0)
    s.add_argument("--k4", type=float)
    s.add_argument("--k5", type=float)
    s.add_argument("--n-shape", type=int, default=50)
    s.add_argument("--turns", type=float, default=3.0)
    s.add_argument("--lo", type=float, default=-1.0)
    s.add_argument("--hi", type=float, default=1.0)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_gen_data)

    s = sub.add_parser("report", help="aggregate trace CSVs into a summary CSV")
    s.add_argument("--traces", required=True, help="glob of trace CSV files")
    s.add_argument("--out", required=True)
    s.add_argument("--metric", choices=("train_metric", "test_metric"), default="test_metric")
    s.set_defaults(fn=cmd_report)

    s = sub.add_parser("run-experiment", help="per-seed runs from a JSON config")
    s.add_argument("--config", required=True)
    s.set_defaults(fn=cmd_run_experiment)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (ValueError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
