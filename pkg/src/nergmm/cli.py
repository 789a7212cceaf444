"""Command-line entry points: synth, fit, predict.

Exit codes: 0 on success, 2 for invalid inputs or configuration, 3 for
numerical failures (non-convergence, singular systems).
"""

import argparse
import logging
import os
import sys

import numpy as np

from . import flatfile
from .bundle import load_bundle, save_bundle
from .catalog import scenarios_to_arrays
from .cells import write_grid
from .config import read_fit_config, read_synth_config
from .errors import (ConstraintError, ConvergenceError, HyperparameterError,
                     NumericalError, OutOfGridError, ValidationError)
from .ergodic import fit_ergodic
from .gmm import f_erg
from .nonergodic import fit_nerg, NergConfig
from .predict import CoeffPrediction, predict_gm, sample_coeff_fields
from .synth import generate

log = logging.getLogger(__name__)

_INPUT_ERRORS = (ValidationError, ConstraintError, HyperparameterError,
                 OutOfGridError, FileNotFoundError, NotADirectoryError,
                 PermissionError, IsADirectoryError)
_NUMERIC_ERRORS = (ConvergenceError, NumericalError, np.linalg.LinAlgError)


def _setup_logging():
    level_name = os.environ.get("NERGMM_LOG", "").strip().lower()
    levels = {"error": logging.ERROR, "warn": logging.WARNING,
              "warning": logging.WARNING, "info": logging.INFO,
              "debug": logging.DEBUG}
    if level_name in levels:
        logging.basicConfig(
            level=levels[level_name],
            format="%(asctime)s %(name)s %(levelname)s %(message)s")


def _cmd_synth(args):
    config = read_synth_config(args.config)
    catalog, truth = generate(config)
    os.makedirs(args.out, exist_ok=True)
    flat_path = os.path.join(args.out, "flatfile.csv")
    flatfile.write_flatfile(catalog, flat_path)
    flatfile.write_truth(catalog, truth, os.path.join(args.out, "truth.csv"))
    if config.spec.cell_term is not None:
        write_grid(config.spec.cell_term.grid,
                   os.path.join(args.out, "cell_grid.json"))
    print(f"wrote {flat_path} ({len(catalog.records)} records, "
          f"{catalog.n_events} events, {catalog.n_stations} stations)")
    return 0


def _fit_report(path, erg_fit, nerg_fit):
    lines = ["ergodic coefficients"]
    for name in ("c1", "c2", "c3", "c4", "c5", "c6", "c7", "c10", "v_ref"):
        lines.append(f"  {name:5s} {getattr(erg_fit.coeffs, name): .8g}")
    lines.append(f"  tau   {erg_fit.tau:.8g}")
    lines.append(f"  phi   {erg_fit.phi:.8g}")
    lines.append(f"  loglik {erg_fit.loglik:.8g}  evals {erg_fit.n_evals}")
    lines.append("")
    lines.append("non-ergodic hyperparameters")
    for term in nerg_fit.spec.terms:
        for kind, (om, el) in zip(term.kinds,
                                  nerg_fit.hyper.for_term(nerg_fit.spec,
                                                          term.name)):
            ell_txt = f"  ell {el:.6g}" if el is not None else ""
            lines.append(f"  {term.name:14s} {kind:20s} omega {om:.6g}"
                         f"{ell_txt}")
    lines.append(f"  tau0  {nerg_fit.hyper.tau0:.8g}")
    lines.append(f"  phi0  {nerg_fit.hyper.phi0:.8g}")
    lines.append(f"  loglik {nerg_fit.loglik:.8g}  evals {nerg_fit.n_evals}")
    lines.append("")
    erg_total = erg_fit.total_sigma
    nerg_total = nerg_fit.variance_check
    lines.append("variance check (total sd at catalog centroid)")
    lines.append(f"  ergodic      {erg_total:.6g}")
    lines.append(f"  non-ergodic  {nerg_total:.6g}")
    lines.append(f"  ratio        {nerg_total / erg_total:.6g}")
    if nerg_fit.cell_posterior is not None:
        rep = nerg_fit.cell_posterior.report
        lines.append("")
        lines.append(f"cell attenuation: {rep.n_clamped} of {rep.n_cells} "
                     f"cells clamped to zero ({100 * rep.fraction:.2f}%)")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _cmd_fit(args):
    catalog = flatfile.read_flatfile(args.flatfile)
    config = read_fit_config(args.config)
    erg_fit = fit_ergodic(catalog, config["erg_config"])
    residuals = catalog.y - f_erg(erg_fit.coeffs, catalog.mag,
                                  catalog.r_rup, catalog.vs30)
    opt = config["optimizer"]
    nerg_config = NergConfig(
        erg_coeffs=erg_fit.coeffs,
        penalty_scale=opt.get("penalty_scale"),
        max_evals=int(opt.get("max_evals", 2000)),
        rel_tol=float(opt.get("rel_tol", 1e-8)))
    nerg_fit = fit_nerg(catalog, residuals, config["spec"], nerg_config)
    os.makedirs(args.out, exist_ok=True)
    names = {"bundle": "model_bundle.npz", "report": "fit_report.txt",
             "cell_paths": "cell_paths.csv"}
    names.update(config["output"])
    bundle_path = os.path.join(args.out, names["bundle"])
    save_bundle(bundle_path, nerg_fit,
                extra={"ergodic_tau": erg_fit.tau, "ergodic_phi": erg_fit.phi,
                       "ergodic_loglik": erg_fit.loglik})
    _fit_report(os.path.join(args.out, names["report"]), erg_fit, nerg_fit)
    if nerg_fit.dR is not None:
        flatfile.write_dR(nerg_fit.dR,
                          os.path.join(args.out, names["cell_paths"]))
    print(f"wrote {bundle_path} (loglik {nerg_fit.loglik:.6g}, "
          f"tau0 {nerg_fit.hyper.tau0:.4g}, phi0 {nerg_fit.hyper.phi0:.4g})")
    return 0


def _cmd_predict(args):
    fit, _ = load_bundle(args.model)
    scenarios = flatfile.read_scenarios(args.scenarios)
    arrs = scenarios_to_arrays(scenarios)
    pred = predict_gm(fit, arrs, route=args.route)
    os.makedirs(args.out, exist_ok=True)
    pred_path = os.path.join(args.out, "predictions.csv")
    flatfile.write_predictions(pred, pred_path)
    flatfile.write_matrix(pred.cov,
                          os.path.join(args.out, "epistemic_cov.csv"))
    if args.draws > 0:
        field = CoeffPrediction(term="gm", mu_star=pred.median,
                                psi_star=pred.cov)
        draws = sample_coeff_fields(field, args.draws, seed=args.seed)
        flatfile.write_draws(draws, pred.scenario_ids,
                             os.path.join(args.out, "draws.csv"))
    print(f"wrote {pred_path} ({pred.median.size} scenarios)")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nergmm",
        description="Non-ergodic ground-motion model workflows")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap BLAS thread pools")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic catalog")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("fit", help="fit ergodic + non-ergodic model")
    p.add_argument("--flatfile", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("predict", help="predict scenarios from a bundle")
    p.add_argument("--model", required=True)
    p.add_argument("--scenarios", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--route", choices=("direct", "compose"),
                   default="direct")
    p.add_argument("--draws", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_predict)
    return parser


def main(argv=None):
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.threads is not None:
            import threadpoolctl
            with threadpoolctl.threadpool_limits(limits=args.threads):
                return args.func(args)
        return args.func(args)
    except _INPUT_ERRORS as exc:
        log.debug("input error", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _NUMERIC_ERRORS as exc:
        log.debug("numerical error", exc_info=True)
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
