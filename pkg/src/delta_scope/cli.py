"""Command-line entry points.

Subcommands:

* ``gen``               — write a seeded synthetic dataset (libsvm format)
* ``train``             — fit a model, save the model artifact
* ``coef-sensitivity``  — certified per-coefficient intervals under an update
* ``label-sensitivity`` — certified label decisions for test instances
* ``loocv``             — accelerated leave-one-out error, single model or grid
* ``bench``             — timing/tightness sweeps written as CSV

Every command emits a JSON report (schema in ``report_schema.json``) to
stdout or ``--report``. Warnings are collected into the report without
changing the exit code; errors print to stderr and exit nonzero.
"""
from __future__ import annotations

import argparse
import csv
import math
import sys
import warnings as _warnings

import numpy as np

from . import bounds as B
from . import loocv as L
from .data import (
    SparseDataset,
    UpdatePlan,
    apply_update,
    load_libsvm,
    make_synthetic,
    save_libsvm,
    with_bias_feature,
)
from .losses import LossKind
from .model_io import load_model, save_model
from .report import build_report, sha256_file, timed_median, write_report
from .solver import SolverError, incremental_train, train

__all__ = ["main"]


def _add_report_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument("--report", metavar="PATH", default=None,
                   help="write the JSON report here instead of stdout")


def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", metavar="FILE", required=True, help="libsvm training data")
    p.add_argument("--dim", type=int, default=None, metavar="D",
                   help="pin the feature dimension instead of inferring it")
    p.add_argument("--add-bias", action="store_true",
                   help="append a constant-1 bias feature")


def _load_data(args) -> SparseDataset:
    ds = load_libsvm(args.data, d=args.dim)
    if args.add_bias:
        ds = with_bias_feature(ds)
    return ds


def _read_removal_indices(path: str) -> list[int]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(int(line))
            except ValueError:
                raise ValueError(f"{path}: line {ln}: not an integer: {line!r}") from None
    return out


def _load_update(args, model) -> tuple[SparseDataset | None, SparseDataset | None, dict]:
    """Read --add/--remove (with --data for removals) into instance sets."""
    inputs: dict = {}
    added = None
    removed = None
    if args.add:
        added = load_libsvm(args.add, d=model.d)
        inputs["additions"] = args.add
    if args.remove:
        if not args.data:
            raise ValueError("--remove needs --data to resolve 0-based row indices")
        base = load_libsvm(args.data, d=model.d)
        if base.n != model.n_train:
            raise ValueError(
                f"--data has {base.n} rows but the model was trained on {model.n_train}"
            )
        idx = _read_removal_indices(args.remove)
        if len(set(idx)) != len(idx):
            raise ValueError("duplicate removal index")
        for i in idx:
            if not 0 <= i < base.n:
                raise ValueError(f"removal index {i} out of range for n={base.n}")
        removed = base.take(idx)
        inputs["training_data"] = args.data
        inputs["removals"] = args.remove
    return added, removed, inputs


def _decision_name(lower: float, upper: float) -> str:
    if lower > 0.0:
        return "+1"
    if upper < 0.0:
        return "-1"
    return "unknown"


def _parse_grid(spec: str) -> list[tuple[float, str]]:
    """Parse '2^-20..2^0' (inclusive power range) or a comma list of floats."""
    spec = spec.strip()
    if ".." in spec:
        lo_s, _, hi_s = spec.partition("..")
        try:
            lo = _parse_power(lo_s)
            hi = _parse_power(hi_s)
        except ValueError:
            raise ValueError(f"bad grid range {spec!r} (expected like 2^-20..2^0)") from None
        if lo > hi:
            raise ValueError(f"grid range {spec!r} is reversed")
        return [(2.0**e, f"2^{e}") for e in range(lo, hi + 1)]
    out = []
    for tok in spec.split(","):
        tok = tok.strip()
        if not tok:
            continue
        out.append((float(tok), tok))
    if not out:
        raise ValueError(f"empty grid spec {spec!r}")
    return out


def _parse_power(tok: str) -> int:
    tok = tok.strip()
    if not tok.startswith("2^"):
        raise ValueError(tok)
    return int(tok[2:])


# ---------------------------------------------------------------------------
# command handlers


def _cmd_gen(args) -> dict:
    ds = make_synthetic(
        args.seed, args.n, args.d, separation=args.separation, density=args.density
    )
    save_libsvm(ds, args.out)
    return build_report(
        "gen",
        {
            "seed": args.seed,
            "n": args.n,
            "d": args.d,
            "separation": args.separation,
            "density": args.density,
        },
        {},
        {"path": args.out, "sha256": sha256_file(args.out), "n": ds.n, "d": ds.d},
    )


def _cmd_train(args) -> dict:
    ds = _load_data(args)
    kind = LossKind.from_name(args.loss)
    model, rep = train(ds, args.lam, kind, tol=args.tol, max_iter=args.max_iter)
    save_model(model, args.model_out)
    return build_report(
        "train",
        {
            "loss": kind.value,
            "lambda": args.lam,
            "tol": args.tol,
            "max_iter": args.max_iter,
            "add_bias": args.add_bias,
        },
        {"training_data": args.data},
        {
            "n": ds.n,
            "d": ds.d,
            "iterations": rep.iterations,
            "final_grad_norm": rep.final_grad_norm,
            "wall_time": rep.wall_time,
            "model": {"path": args.model_out, "sha256": sha256_file(args.model_out)},
        },
    )


def _update_stats_for(args, model) -> tuple[B.UpdateStats, dict]:
    added, removed, inputs = _load_update(args, model)
    if added is None and removed is None:
        raise ValueError("nothing to do: give --add and/or --remove")
    stats = B.compute_delta_s(model, added, removed)
    return stats, inputs


def _cmd_coef_sensitivity(args) -> dict:
    model = load_model(args.model)
    stats, inputs = _update_stats_for(args, model)
    ball = B.old_optimum_ball(model, stats)
    box = B.coefficient_bounds(ball)
    inputs = {"model": args.model, **inputs}
    norm_change = {
        "q=1": B.norm_change_bound(model.beta, box, 1),
        "q=2": B.norm_change_bound(model.beta, box, 2),
        "q=inf": B.norm_change_bound(model.beta, box, math.inf),
    }
    results = {
        "n_old": stats.n_old,
        "n_new": stats.n_new,
        "n_added": stats.n_added,
        "n_removed": stats.n_removed,
        "radius": ball.radius,
        "interval_width": box.width,
        "norm_change_bound": norm_change,
    }
    if args.format == "csv":
        if not args.out:
            raise ValueError("--format csv needs --out")
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["coefficient", "lower", "upper"])
            for j in range(model.d):
                writer.writerow([j, repr(float(box.lower[j])), repr(float(box.upper[j]))])
        results["csv"] = {"path": args.out, "sha256": sha256_file(args.out)}
    else:
        results["coefficients"] = [
            [float(lo), float(hi)] for lo, hi in zip(box.lower, box.upper)
        ]
    return build_report(
        "coef-sensitivity",
        {"format": args.format},
        inputs,
        results,
    )


def _cmd_label_sensitivity(args) -> dict:
    model = load_model(args.model)
    stats, inputs = _update_stats_for(args, model)
    ball = B.old_optimum_ball(model, stats)
    test = load_libsvm(args.test, d=model.d)
    inputs = {"model": args.model, "test_data": args.test, **inputs}
    lower, upper = B.batch_score_bounds(ball, test.X)
    n_plus = int(np.count_nonzero(lower > 0.0))
    n_minus = int(np.count_nonzero(upper < 0.0))
    n_unknown = test.n - n_plus - n_minus
    results = {
        "n_test": test.n,
        "n_plus": n_plus,
        "n_minus": n_minus,
        "n_unknown": n_unknown,
        "fraction_determined": (n_plus + n_minus) / test.n,
        "radius": ball.radius,
    }
    if args.format == "csv":
        if not args.out:
            raise ValueError("--format csv needs --out")
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["instance", "lower", "upper", "decision"])
            for i in range(test.n):
                writer.writerow(
                    [i, repr(float(lower[i])), repr(float(upper[i])),
                     _decision_name(lower[i], upper[i])]
                )
        results["csv"] = {"path": args.out, "sha256": sha256_file(args.out)}
    else:
        results["decisions"] = [
            {
                "instance": i,
                "lower": float(lower[i]),
                "upper": float(upper[i]),
                "decision": _decision_name(lower[i], upper[i]),
            }
            for i in range(test.n)
        ]
    return build_report("label-sensitivity", {"format": args.format}, inputs, results)


def _loocv_result_payload(res: L.LoocvResult) -> dict:
    counts = {d.value: 0 for d in L.FoldDecision}
    for o in res.outcomes:
        counts[o.decision.value] += 1
    return {
        "n": res.n,
        "mode": res.mode.value,
        "error_rate": res.error_rate,
        "error_lower": res.error_lower,
        "error_upper": res.error_upper,
        "solves_performed": res.solves_performed,
        "solver_iterations": res.solver_iterations,
        "decisions": counts,
        "bound_time": res.bound_time,
        "solve_time": res.solve_time,
        "wall_time": res.wall_time,
        "pruned": res.pruned,
    }


def _cmd_loocv(args) -> dict:
    if (args.lam is None) == (args.lambda_grid is None):
        raise ValueError("give exactly one of --lambda / --lambda-grid")
    if args.gamma_grid and args.lambda_grid is None:
        raise ValueError("--gamma-grid needs --lambda-grid")
    ds = _load_data(args)
    kind = LossKind.from_name(args.loss)
    mode = L.LoocvMode.from_name(args.mode)
    common = dict(
        mode=mode,
        order_trick=args.order_trick,
        fold_tol=args.fold_tol,
        full_tol=args.full_tol,
        threads=args.threads,
    )
    params = {
        "loss": kind.value,
        "mode": mode.value,
        "order_trick": args.order_trick,
        "prune": args.prune,
        "fold_tol": args.fold_tol,
        "full_tol": args.full_tol,
        "add_bias": args.add_bias,
    }
    if args.lam is not None:
        result = L.run_loocv(ds, args.lam, kind, **common)
        params["lambda"] = args.lam
        payload = {"single": _loocv_result_payload(result), "lambda": args.lam}
        return build_report("loocv", params, {"training_data": args.data}, payload)

    lam_grid = _parse_grid(args.lambda_grid)
    grid: list[L.GridPoint] = []
    if args.gamma_grid:
        for gamma, glabel in _parse_grid(args.gamma_grid):
            fmap = L.rbf_feature_map(
                ds, gamma, n_centers=args.rbf_centers, seed=args.rbf_seed
            )
            for lam, llabel in lam_grid:
                grid.append(
                    L.GridPoint(lam, fmap, f"lambda={llabel},gamma={glabel}")
                )
    else:
        grid = [L.GridPoint(lam, None, f"lambda={label}") for lam, label in lam_grid]
    params.update(
        {
            "lambda_grid": args.lambda_grid,
            "gamma_grid": args.gamma_grid,
            "rbf_centers": args.rbf_centers if args.gamma_grid else None,
            "rbf_seed": args.rbf_seed if args.gamma_grid else None,
        }
    )
    sel = L.model_select(ds, grid, kind, prune=args.prune, **common)
    cells = []
    for cell in sel.cells:
        entry = {"label": cell.point.describe(), "lambda": cell.point.lam}
        entry.update(_loocv_result_payload(cell.result))
        cells.append(entry)
    payload = {
        "n_cells": len(cells),
        "cells": cells,
        "best": {
            "index": sel.best_index,
            "label": sel.best.point.describe(),
            "lambda": sel.best.point.lam,
            "error_rate": sel.best.result.error_rate,
        },
    }
    return build_report("loocv", params, {"training_data": args.data}, payload)


def _bench_rows(args, ds, pool, kind):
    """Yield one CSV row dict per (fraction, repeat) cell of the sweep."""
    n = ds.n
    base_model = None
    if args.sweep == "update-fraction":
        base_model, _ = train(ds, args.lam, kind, tol=args.tol)
    for fi, frac in enumerate(args.fraction_values):
        for rep in range(args.repeats):
            rng = np.random.default_rng([args.seed, fi, rep])
            if args.sweep == "update-fraction":
                model, work, extra_pool = base_model, ds, pool
            else:
                n_old = max(2, round(frac * n))
                subset = np.sort(rng.choice(n, size=n_old, replace=False))
                work = ds.take(subset)
                mask = np.ones(n, dtype=bool)
                mask[subset] = False
                leftover = ds.take(np.flatnonzero(mask)) if mask.any() else None
                extra_pool = pool if pool is not None else leftover
                model, _ = train(work, args.lam, kind, tol=args.tol)
            k = max(1, round((frac if args.sweep == "update-fraction" else 0.001) * n))
            k = min(k, work.n - 1)
            if extra_pool is not None and extra_pool.n > 0:
                k_add = min(k // 2, extra_pool.n)
            else:
                k_add = 0
            k_rem = k - k_add
            removed_idx = np.sort(rng.choice(work.n, size=k_rem, replace=False))
            removed = work.take(removed_idx) if k_rem else None
            added = None
            if k_add:
                added = extra_pool.take(
                    np.sort(rng.choice(extra_pool.n, size=k_add, replace=False))
                )

            def bound_pass():
                stats = B.compute_delta_s(model, added, removed)
                ball = B.old_optimum_ball(model, stats)
                return ball, B.coefficient_bounds(ball)

            bound_time, (ball, box) = timed_median(bound_pass, args.timing_repeats)
            lower, upper = B.batch_score_bounds(ball, work.X)
            determined = float(np.mean((lower > 0.0) | (upper < 0.0)))
            plan = UpdatePlan(
                added if added is not None else SparseDataset.empty(work.d),
                tuple(int(i) for i in removed_idx),
            )
            new_ds = apply_update(work, plan)
            retrain_time, _ = timed_median(
                lambda: incremental_train(model, new_ds, tol=args.tol),
                args.timing_repeats,
            )
            yield {
                "sweep": args.sweep,
                "fraction": frac,
                "repeat": rep,
                "n_old": work.n,
                "n_added": k_add,
                "n_removed": k_rem,
                "lambda": args.lam,
                "loss": kind.value,
                "tightness": box.width,
                "fraction_determined": determined,
                "bound_time": bound_time,
                "retrain_time": retrain_time,
            }


def _cmd_bench(args) -> dict:
    kind = LossKind.from_name(args.loss)
    inputs = {}
    if args.data:
        ds = load_libsvm(args.data, d=args.dim)
        inputs["training_data"] = args.data
    else:
        ds = make_synthetic(args.seed, args.n, args.d, density=args.density)
    pool = None
    if args.pool:
        pool = load_libsvm(args.pool, d=ds.d)
        inputs["addition_pool"] = args.pool
    args.fraction_values = [float(t) for t in args.fractions.split(",") if t.strip()]
    if not args.fraction_values:
        raise ValueError("no sweep fractions given")
    fieldnames = [
        "sweep", "fraction", "repeat", "n_old", "n_added", "n_removed",
        "lambda", "loss", "tightness", "fraction_determined",
        "bound_time", "retrain_time",
    ]
    n_rows = 0
    sums: dict[float, dict[str, float]] = {}
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in _bench_rows(args, ds, pool, kind):
            writer.writerow(row)
            n_rows += 1
            agg = sums.setdefault(
                row["fraction"],
                {"tightness": 0.0, "fraction_determined": 0.0, "speedup": 0.0, "n": 0},
            )
            agg["tightness"] += row["tightness"]
            agg["fraction_determined"] += row["fraction_determined"]
            agg["speedup"] += row["retrain_time"] / max(row["bound_time"], 1e-12)
            agg["n"] += 1
    aggregates = [
        {
            "fraction": frac,
            "mean_tightness": agg["tightness"] / agg["n"],
            "mean_fraction_determined": agg["fraction_determined"] / agg["n"],
            "mean_speedup": agg["speedup"] / agg["n"],
        }
        for frac, agg in sorted(sums.items())
    ]
    params = {
        "loss": kind.value,
        "lambda": args.lam,
        "sweep": args.sweep,
        "fractions": args.fraction_values,
        "repeats": args.repeats,
        "timing_repeats": args.timing_repeats,
        "seed": args.seed,
        "tol": args.tol,
    }
    results = {
        "csv": {"path": args.out, "sha256": sha256_file(args.out)},
        "rows": n_rows,
        "aggregates": aggregates,
    }
    return build_report("bench", params, inputs, results)


# ---------------------------------------------------------------------------
# parser


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="delta-scope",
        description="Certified sensitivity of L2-regularized linear classifiers "
        "to small training-set updates.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a seeded synthetic dataset")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--separation", type=float, default=2.0)
    p.add_argument("--density", type=float, default=1.0)
    p.add_argument("--out", required=True, metavar="FILE")
    _add_report_arg(p)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("train", help="fit a model and save the artifact")
    _add_data_args(p)
    p.add_argument("--loss", required=True, help="logistic or l2-hinge")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=10_000)
    p.add_argument("--model-out", required=True, metavar="FILE")
    _add_report_arg(p)
    p.set_defaults(func=_cmd_train)

    for name, handler, needs_test in (
        ("coef-sensitivity", _cmd_coef_sensitivity, False),
        ("label-sensitivity", _cmd_label_sensitivity, True),
    ):
        p = sub.add_parser(
            name,
            help=(
                "certified coefficient intervals under an update"
                if not needs_test
                else "certified label decisions for test instances under an update"
            ),
        )
        p.add_argument("--model", required=True, metavar="FILE")
        p.add_argument("--data", default=None, metavar="FILE",
                       help="training data (required with --remove)")
        p.add_argument("--add", default=None, metavar="FILE",
                       help="libsvm file of instances to add")
        p.add_argument("--remove", default=None, metavar="FILE",
                       help="file of 0-based training-row indices to remove")
        if needs_test:
            p.add_argument("--test", required=True, metavar="FILE")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--out", default=None, metavar="FILE",
                       help="CSV output path (with --format csv)")
        _add_report_arg(p)
        p.set_defaults(func=handler)

    p = sub.add_parser("loocv", help="accelerated leave-one-out evaluation")
    _add_data_args(p)
    p.add_argument("--loss", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--lambda-grid", default=None, metavar="SPEC",
                   help="e.g. 2^-20..2^0 or 0.01,0.1,1 (model selection)")
    p.add_argument("--gamma-grid", default=None, metavar="SPEC",
                   help="Gaussian-feature gamma grid (with --lambda-grid)")
    p.add_argument("--rbf-centers", type=int, default=100)
    p.add_argument("--rbf-seed", type=int, default=0)
    p.add_argument("--mode", choices=[m.value for m in L.LoocvMode], default="op1")
    p.add_argument("--order-trick", action="store_true",
                   help="solve undecided folds in increasing-margin order")
    p.add_argument("--prune", action="store_true",
                   help="abandon grid cells that cannot beat the incumbent")
    p.add_argument("--fold-tol", type=float, default=L.DEFAULT_FOLD_TOL)
    p.add_argument("--full-tol", type=float, default=1e-8)
    p.add_argument("--threads", type=int, default=None)
    _add_report_arg(p)
    p.set_defaults(func=_cmd_loocv)

    p = sub.add_parser("bench", help="tightness/timing sweep, written as CSV")
    p.add_argument("--data", default=None, metavar="FILE")
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=1000, help="synthetic rows (no --data)")
    p.add_argument("--d", type=int, default=20, help="synthetic features (no --data)")
    p.add_argument("--density", type=float, default=1.0)
    p.add_argument("--loss", required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--sweep", choices=("update-fraction", "train-size"),
                   default="update-fraction")
    p.add_argument("--fractions", default="0.0001,0.0005,0.001,0.005,0.01",
                   help="comma list: update fractions, or train-size fractions")
    p.add_argument("--repeats", type=int, default=30)
    p.add_argument("--timing-repeats", type=int, default=5)
    p.add_argument("--pool", default=None, metavar="FILE",
                   help="libsvm pool that additions are drawn from")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out", required=True, metavar="FILE")
    _add_report_arg(p)
    p.set_defaults(func=_cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        with _warnings.catch_warnings(record=True) as caught:
            _warnings.simplefilter("always")
            report = args.func(args)
        report["warnings"].extend(str(w.message) for w in caught)
        write_report(report, args.report)
    except (ValueError, OSError) as exc:
        print(f"delta-scope: error: {exc}", file=sys.stderr)
        return 1
    except SolverError as exc:
        print(f"delta-scope: solver failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
