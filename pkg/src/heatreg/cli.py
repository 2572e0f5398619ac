"""Command-line interface: fit, predict, cv, simulate, export-weights."""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .approx import fit_aen, fit_heat_approx, fit_sen, fit_sen_all
from .dataset import (SCALE_MODES, DataError, StandardizeOptions, _read_table,
                      load_dataset)
from .model_file import (ModelFile, ModelFileError, export_weights,
                         model_from_fit, predict_with_model, read_model,
                         write_model)
from .penalty import PenaltyParams
from .simulation import (HARNESS_PLAN, parse_scenario_config, run_experiment,
                         summarize, write_rows, write_summary)
from .solver import SolverConfig, fit_heat, fit_heat_oracle, fit_reheat
from .tuning import (HEAT_FAMILY, CVPlan, canonical_estimator, cross_validate,
                     fit_cv)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NONCONVERGED = 2


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--quiet", action="store_true",
                   help="suppress the human-readable report on stdout")


def _ratios(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(","))


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="heatreg",
        description="Joint sparse regression across populations with "
                    "heterogeneous error variances.")
    sub = top.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit a model from a population manifest")
    fit.add_argument("--manifest", required=True)
    fit.add_argument("--estimator", required=True,
                     choices=["heat", "heat-app", "reheat", "heat-oracle",
                              "sen", "aen"])
    fit.add_argument("--lambda", dest="lam", type=float, default=None)
    fit.add_argument("--gamma", type=float, default=None)
    fit.add_argument("--cv", action="store_true",
                     help="choose (lambda, gamma) by cross-validation")
    fit.add_argument("--folds", type=int, default=10)
    fit.add_argument("--grid-size", type=int, default=50)
    fit.add_argument("--grid-eps", type=float, default=0.01)
    fit.add_argument("--gamma-ratios", type=_ratios, default=(0.0, 0.25, 0.5, 1.0))
    fit.add_argument("--pilot-formula", choices=["natural", "as_printed"],
                     default="natural")
    fit.add_argument("--pilot-folds", type=int, default=10)
    fit.add_argument("--population", default=None,
                     help="fit only this population (sen)")
    fit.add_argument("--sigma", default=None,
                     help="comma-separated true error SDs (heat-oracle)")
    fit.add_argument("--standardize", choices=SCALE_MODES,
                     default="unit_norm_bounded")
    fit.add_argument("--tol", type=float, default=1e-7)
    fit.add_argument("--out", required=True)
    _common_flags(fit)

    pred = sub.add_parser("predict", help="predict from a saved model")
    pred.add_argument("--model", required=True)
    pred.add_argument("--data", required=True)
    pred.add_argument("--population", default=None)
    pred.add_argument("--out", default=None, help="output CSV (default stdout)")
    _common_flags(pred)

    cv = sub.add_parser("cv", help="cross-validate the penalty pair")
    cv.add_argument("--manifest", required=True)
    cv.add_argument("--estimator", required=True,
                    choices=["heat", "heat-app", "reheat", "heat-oracle"])
    cv.add_argument("--folds", type=int, default=10)
    cv.add_argument("--grid-size", type=int, default=50)
    cv.add_argument("--grid-eps", type=float, default=0.01)
    cv.add_argument("--gamma-ratios", type=_ratios, default=(0.0, 0.25, 0.5, 1.0))
    cv.add_argument("--pilot-formula", choices=["natural", "as_printed"],
                    default="natural")
    cv.add_argument("--pilot-folds", type=int, default=10)
    cv.add_argument("--sigma", default=None)
    cv.add_argument("--standardize", choices=SCALE_MODES,
                    default="unit_norm_bounded")
    cv.add_argument("--out", default=None, help="CV surface CSV")
    _common_flags(cv)

    sim = sub.add_parser("simulate", help="run a simulation experiment grid")
    sim.add_argument("--config", required=True)
    sim.add_argument("--estimators", required=True,
                     help="comma-separated estimator names")
    sim.add_argument("--replicates", type=int, default=None)
    sim.add_argument("--folds", type=int, default=HARNESS_PLAN.folds)
    sim.add_argument("--grid-size", type=int, default=HARNESS_PLAN.grid_size)
    sim.add_argument("--gamma-ratios", type=_ratios,
                     default=HARNESS_PLAN.gamma_ratios)
    sim.add_argument("--out", required=True)
    _common_flags(sim)

    exp = sub.add_parser("export-weights",
                         help="export per-predictor weights as TSV")
    exp.add_argument("--model", required=True)
    exp.add_argument("--out", required=True)
    _common_flags(exp)
    return top


def _parse_sigma(text, data):
    if text is None:
        raise DataError("--sigma is required for heat-oracle")
    sigma = np.array([float(x) for x in text.split(",")])
    if sigma.shape[0] != data.n_populations:
        raise DataError("--sigma must list one value per population")
    return sigma


def _fit_report(fit, data) -> str:
    lines = [f"estimator: {fit.estimator}"]
    if np.isfinite(fit.lam):
        lines.append(f"lambda: {fit.lam:.6g}  gamma: {fit.gamma:.6g}")
    lines.append(f"converged: {fit.converged}  iterations: {fit.iterations}  "
                 f"kkt: {fit.kkt:.3g}")
    lines.append("population  n       sigma_hat   support  intercept")
    nz = fit.B_hat != 0.0
    for col, lab in enumerate(fit.population_labels):
        n = data.blocks[data.label_index(lab)].n
        lines.append(f"{lab:<11} {n:<7d} {fit.sigma_hat[col]:<11.5g} "
                     f"{int(nz[:, col].sum()):<8d} {fit.intercepts[col]:.5g}")
    if nz.shape[1] > 1:
        shared = int(nz.all(axis=1).sum())
        lines.append(f"selected in every population: {shared}")
        for col, lab in enumerate(fit.population_labels):
            size = int(nz[:, col].sum())
            prop = shared / size if size else float("nan")
            lines.append(f"  share of {lab} support that is shared: {prop:.3g}")
    return "\n".join(lines)


def _cmd_fit(args) -> int:
    est = canonical_estimator(args.estimator)
    data = load_dataset(args.manifest,
                        StandardizeOptions(mode=args.standardize))
    config = SolverConfig(tol=args.tol)
    sigma = _parse_sigma(args.sigma, data) if est == "heat-oracle" else None
    if est in HEAT_FAMILY:
        if args.cv == (args.lam is not None):
            raise DataError("give either --lambda/--gamma or --cv, not both")
        if args.cv:
            plan = CVPlan(folds=args.folds, grid_size=args.grid_size,
                          grid_eps=args.grid_eps,
                          gamma_ratios=args.gamma_ratios, seed=args.seed)
            fit = fit_cv(data, est, plan, config, sigma_true=sigma,
                         pilot_formula=args.pilot_formula,
                         pilot_folds=args.pilot_folds)
        else:
            params = PenaltyParams.for_dataset(data, args.lam,
                                               args.gamma or 0.0)
            if est == "heat":
                fit = fit_heat(data, params, config)
            elif est == "reheat":
                fit = fit_reheat(data, params, config)
            elif est == "heat-oracle":
                fit = fit_heat_oracle(data, params, config, sigma_true=sigma)
            else:
                fit = fit_heat_approx(data, params, config,
                                      pilot_folds=args.pilot_folds,
                                      pilot_formula=args.pilot_formula,
                                      seed=args.seed)
    else:
        if args.lam is not None or args.cv:
            raise DataError(f"{est} tunes itself internally; "
                            "drop --lambda/--cv")
        if est == "sen":
            fit = (fit_sen(data, args.population, cv_folds=args.folds,
                           seed=args.seed)
                   if args.population else
                   fit_sen_all(data, cv_folds=args.folds, seed=args.seed))
        else:
            fit = fit_aen(data, cv_folds=args.folds, seed=args.seed)

    model = model_from_fit(fit, data, seed=args.seed)
    write_model(model, args.out)
    if not args.quiet:
        print(_fit_report(fit, data))
        print(f"model written to {args.out}")
    return EXIT_OK if fit.converged else EXIT_NONCONVERGED


def _read_predict_table(path):
    y, X, names = None, None, None
    first = Path(path).read_text(encoding="utf-8").splitlines()
    if not first:
        raise DataError(f"{path}: empty file")
    delim = "\t" if "\t" in first[0] else ","
    header = [h.strip() for h in first[0].split(delim)]
    if header and header[0] == "response":
        _, X, names = _read_table(path)
        return names, X
    rows = list(csv.reader(first[1:], delimiter=delim))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    try:
        X = np.array([[float(c) for c in r] for r in rows])
    except ValueError:
        raise DataError(f"{path}: non-numeric cell") from None
    if X.ndim != 2 or X.shape[1] != len(header):
        raise DataError(f"{path}: inconsistent row widths")
    return header, X


def _cmd_predict(args) -> int:
    model = read_model(args.model)
    names, X = _read_predict_table(args.data)
    preds = predict_with_model(model, names, X, population=args.population)
    lines = ["row,population,prediction"]
    for label, vec in preds.items():
        for i, v in enumerate(vec, 1):
            lines.append(f"{i},{label},{v!r}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        if not args.quiet:
            print(f"predictions written to {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_cv(args) -> int:
    est = canonical_estimator(args.estimator)
    data = load_dataset(args.manifest,
                        StandardizeOptions(mode=args.standardize))
    sigma = _parse_sigma(args.sigma, data) if est == "heat-oracle" else None
    plan = CVPlan(folds=args.folds, grid_size=args.grid_size,
                  grid_eps=args.grid_eps, gamma_ratios=args.gamma_ratios,
                  seed=args.seed)
    cv = cross_validate(data, est, plan, SolverConfig(), sigma_true=sigma,
                        pilot_folds=args.pilot_folds,
                        pilot_formula=args.pilot_formula)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["lambda", "gamma", "cv_mse"])
            for lam, gamma, score in cv.table:
                writer.writerow([repr(lam), repr(gamma), repr(score)])
    if not args.quiet:
        print(f"selected lambda={cv.lam!r} gamma={cv.gamma!r} "
              f"cv_mse={cv.score!r}")
        if args.out:
            print(f"surface written to {args.out}")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    scenarios, options = parse_scenario_config(args.config)
    if args.seed:
        scenarios = [replace(sc, seed=args.seed) for sc in scenarios]
    replicates = args.replicates or options["replicates"]
    estimators = [canonical_estimator(e) for e in args.estimators.split(",")]
    plan = replace(HARNESS_PLAN, folds=args.folds, grid_size=args.grid_size,
                   gamma_ratios=args.gamma_ratios)
    rows = run_experiment(scenarios, estimators, replicates, args.out,
                          plan=plan, threads=args.threads)
    summary = summarize(rows)
    summary_path = str(Path(args.out).with_suffix("")) + ".summary.csv"
    write_summary(summary, summary_path)
    if not args.quiet:
        shown = [r for r in summary if r["metric"] in ("rmse", "rmse_ratio")]
        print("scenario sigma_ratio q     estimator       population metric"
              "      median     mean")
        for r in shown:
            print(f"{r['scenario']:<8d} {r['sigma_ratio']:<11g} "
                  f"{r['q']:<5g} {r['estimator']:<15s} "
                  f"{r['population']:<10s} {r['metric']:<11s} "
                  f"{r['median']:<10.4g} {r['mean']:.4g}")
        print(f"results written to {args.out}; summary to {summary_path}")
    return EXIT_OK


def _cmd_export(args) -> int:
    model = read_model(args.model)
    export_weights(model, args.out)
    if not args.quiet:
        print(f"weights written to {args.out}")
    return EXIT_OK


_COMMANDS = {
    "fit": _cmd_fit,
    "predict": _cmd_predict,
    "cv": _cmd_cv,
    "simulate": _cmd_simulate,
    "export-weights": _cmd_export,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (DataError, ModelFileError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
