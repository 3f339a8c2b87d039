"""Command-line interface.

Subcommands:

* ``fit``      -- load outcome + exposure summary tables, harmonize,
                  partition, estimate the error covariance from null
                  variants, fit the requested estimator, write artifacts.
* ``errcov``   -- same ingestion, but stop after the error covariance.
* ``simulate`` -- run a replication sweep from a JSON config.
* ``theory``   -- print closed-form predictions for a population spec.

Exit codes: 0 success, 2 usage/input error, 3 estimation failure.  Every
run writes ``run_manifest.json`` (hashed inputs, thresholds, versions,
seed) so it can be reproduced exactly.  Floats are printed with 10
significant digits.  Set MRBEE_NO_COLOR to disable ANSI-colored stage
messages.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .config import population_spec_from_dict, sim_config_from_dict
from .errorcov import estimate_error_cov, to_correlation
from .estimators import fit_ivw, fit_mrbee
from .exceptions import EstimationError, InputError, MrbeeError
from .panel import (
    DEFAULT_IV_PVALUE,
    DEFAULT_NULL_PVALUE,
    harmonize,
    load_overlap_matrix,
    load_summary_table,
    partition_variants,
)
from .pleiotropy import IterConfig, fit_mrbee_iterative
from .theory import (
    compute_sigma_bc,
    derive_moments,
    ivw_asymptotics,
    ivw_score_expectation,
    mrbee_asymptotics,
    special_overlap_fraction,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_ESTIMATION = 3


def _fmt(x: float) -> str:
    return f"{float(x):.10g}"


def _use_color() -> bool:
    return not os.environ.get("MRBEE_NO_COLOR") and sys.stderr.isatty()


def _stage(msg: str) -> None:
    if _use_color():
        print(f"\033[36m[mrbee]\033[0m {msg}", file=sys.stderr)
    else:
        print(f"[mrbee] {msg}", file=sys.stderr)


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir: str, args: argparse.Namespace, input_paths: list[str], extra: dict) -> None:
    manifest = {
        "tool": "mrbee",
        "version": __version__,
        "numpy_version": np.__version__,
        "argv": sys.argv[1:],
        "inputs": {path: _sha256(path) for path in input_paths},
        "options": {k: v for k, v in vars(args).items() if k != "func"},
        **extra,
    }
    with open(os.path.join(out_dir, "run_manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _parse_columns(pairs: list[str]) -> dict[str, str]:
    schema = {}
    for pair in pairs:
        if "=" not in pair:
            raise InputError(f"--columns entries must look like logical=actual, got '{pair}'")
        key, value = pair.split("=", 1)
        schema[key.strip()] = value.strip()
    return schema


def _load_study(args: argparse.Namespace):
    schema = _parse_columns(args.columns or [])
    _stage(f"loading outcome {args.outcome}")
    outcome = load_summary_table(args.outcome, schema=schema)
    exposures = []
    for path in args.exposure:
        _stage(f"loading exposure {path}")
        exposures.append(load_summary_table(path, schema=schema))
    overlap = None
    if args.overlap:
        trait_ids = (outcome.trait_id, *(e.trait_id for e in exposures))
        overlap = load_overlap_matrix(args.overlap, trait_ids)
    _stage("harmonizing alleles and standardizing to z-scores")
    panel = harmonize(outcome, exposures, overlap=overlap)
    _stage(f"partitioning {panel.m} shared variants")
    selection = partition_variants(panel, iv_pvalue=args.iv_pval, null_pvalue=args.null_pval)
    return panel, selection


def _write_errcov(out_dir: str, selection, ecov) -> str:
    path = os.path.join(out_dir, "errcov.tsv")
    trait_order = list(selection.iv_panel.exposure_ids) + [selection.iv_panel.outcome_id]
    with open(path, "w") as fh:
        fh.write("trait\t" + "\t".join(trait_order) + "\n")
        for i, tid in enumerate(trait_order):
            cells = "\t".join(_fmt(v) for v in ecov.full[i])
            fh.write(f"{tid}\t{cells}\n")
    return path


def _write_estimates(out_dir: str, panel, est) -> str:
    path = os.path.join(out_dir, "estimates.tsv")
    with open(path, "w") as fh:
        fh.write("exposure_id\ttheta\tse\tz\tpval\tmethod\tm_used\thessian_repaired\n")
        for s, name in enumerate(panel.exposure_ids):
            fh.write(
                "\t".join(
                    [
                        name,
                        _fmt(est.theta[s]),
                        _fmt(est.se[s]),
                        _fmt(est.z[s]),
                        _fmt(est.pvalue[s]),
                        est.method,
                        str(est.m_used),
                        str(int(est.hessian_repaired)),
                    ]
                )
                + "\n"
            )
    return path


def _write_outliers(out_dir: str, iv_panel, fit) -> str:
    path = os.path.join(out_dir, "outliers.tsv")
    report = fit.report
    with open(path, "w") as fh:
        fh.write("variant_id\tgamma_hat\tt_stat\tpvalue\tflagged\titeration_flagged\n")
        for j, vid in enumerate(iv_panel.variant_ids):
            flagged = int(j in report.flagged)
            first_it = fit.first_flagged_iteration.get(vid, "")
            fh.write(
                "\t".join(
                    [
                        str(vid),
                        _fmt(report.gamma_hat[j]),
                        _fmt(report.t_stat[j]),
                        _fmt(report.pvalue[j]),
                        str(flagged),
                        str(first_it),
                    ]
                )
                + "\n"
            )
    return path


def cmd_fit(args: argparse.Namespace) -> int:
    os.makedirs(args.out, exist_ok=True)
    panel, selection = _load_study(args)
    _stage(f"estimating error covariance from {selection.null_panel.m} null variants")
    ecov = estimate_error_cov(selection.null_panel)
    _write_errcov(args.out, selection, ecov)
    iv_panel = selection.iv_panel
    method = args.method
    _stage(f"fitting {method} on {iv_panel.m} instruments")
    if method == "ivw":
        est = fit_ivw(iv_panel)
    elif method == "mrbee":
        est = fit_mrbee(iv_panel, ecov)
    else:
        config = IterConfig(q=args.fdr_q)
        fit = fit_mrbee_iterative(selection, ecov, config)
        est = fit.estimate
        _write_outliers(args.out, iv_panel, fit)
    _write_estimates(args.out, iv_panel, est)
    _write_manifest(
        args.out,
        args,
        [args.outcome, *args.exposure] + ([args.overlap] if args.overlap else []),
        {"m_instruments": iv_panel.m, "m_null": selection.null_panel.m},
    )
    _stage(f"wrote artifacts to {args.out}")
    return EXIT_OK


def cmd_errcov(args: argparse.Namespace) -> int:
    os.makedirs(args.out, exist_ok=True)
    _, selection = _load_study(args)
    ecov = estimate_error_cov(selection.null_panel)
    path = _write_errcov(args.out, selection, ecov)
    _write_manifest(
        args.out,
        args,
        [args.outcome, *args.exposure] + ([args.overlap] if args.overlap else []),
        {"m_null": selection.null_panel.m},
    )
    _stage(f"wrote {path}")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    from .simulate import run_replications

    with open(args.config) as fh:
        raw = json.load(fh)
    config = sim_config_from_dict(raw)
    if args.reps is not None:
        if args.reps < 1:
            raise InputError("--reps must be at least 1")
        from dataclasses import replace

        config = replace(config, replications=args.reps)
    if args.seed is not None:
        from dataclasses import replace

        config = replace(config, seed=args.seed)
    config.validate()
    os.makedirs(args.out, exist_ok=True)
    _stage(f"running {config.replications} replications in {config.mode} mode")
    metrics = run_replications(config, threads=args.threads)
    path = os.path.join(args.out, "metrics.csv")
    with open(path, "w") as fh:
        fh.write("method,coordinate,metric,value\n")
        for method, coord, metric, value in metrics.to_rows():
            fh.write(f"{method},{coord},{metric},{_fmt(value)}\n")
    _write_manifest(args.out, args, [args.config], {"replications": config.replications, "seed": config.seed})
    _stage(f"wrote {path}")
    return EXIT_OK


def cmd_theory(args: argparse.Namespace) -> int:
    with open(args.config) as fh:
        raw = json.load(fh)
    spec = population_spec_from_dict(raw)
    spec.validate()
    rows: list[tuple[str, str, str]] = []
    mom = derive_moments(spec)
    for s in range(spec.p):
        rows.append(("sigma_xy", str(s), _fmt(mom.sigma_xy[s])))
    rows.append(("sigma_yy", "-", _fmt(mom.sigma_yy)))
    if spec.overlap is not None:
        dec = ivw_score_expectation(spec)
        for s in range(spec.p):
            rows.append(("score_bias_total", str(s), _fmt(dec.total[s])))
            rows.append(("score_bias_measurement", str(s), _fmt(dec.measurement[s])))
            rows.append(("score_bias_confounder", str(s), _fmt(dec.confounder[s])))
        if spec.p == 1:
            rows.append(("special_overlap_fraction", "0", _fmt(special_overlap_fraction(spec))))
        sigma_bc = compute_sigma_bc(spec)
        for i in range(spec.p):
            for j in range(spec.p):
                rows.append(("sigma_bc", f"{i},{j}", _fmt(sigma_bc[i, j])))
        for regime in args.ivw_regime or []:
            pred = ivw_asymptotics(spec, regime, c0=args.c0)
            for s in range(spec.p):
                rows.append((f"ivw_bias_regime_{regime}", str(s), _fmt(pred.bias[s])))
                if pred.cov is not None:
                    rows.append((f"ivw_sd_regime_{regime}", str(s), _fmt(np.sqrt(pred.cov[s, s]))))
        for regime in args.mrbee_regime or []:
            pred = mrbee_asymptotics(spec, regime, c0=args.c0)
            for s in range(spec.p):
                rows.append((f"mrbee_sd_regime_{regime}", str(s), _fmt(np.sqrt(pred.cov[s, s]))))
    out = sys.stdout
    out.write("quantity\tcoordinate\tvalue\n")
    for quantity, coord, value in rows:
        out.write(f"{quantity}\t{coord}\t{value}\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mrbee",
        description="Multivariable Mendelian randomization with bias-corrected estimating equations",
    )
    parser.add_argument("--version", action="version", version=f"mrbee {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_study_args(sp):
        sp.add_argument("--outcome", required=True, help="outcome summary TSV")
        sp.add_argument("--exposure", action="append", required=True, help="exposure summary TSV (repeatable)")
        sp.add_argument("--overlap", help="optional overlap-count TSV (trait ids on both axes)")
        sp.add_argument("--columns", action="append", metavar="LOGICAL=ACTUAL", help="column remapping")
        sp.add_argument("--iv-pval", type=float, default=DEFAULT_IV_PVALUE, dest="iv_pval")
        sp.add_argument("--null-pval", type=float, default=DEFAULT_NULL_PVALUE, dest="null_pval")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=0)

    fit = sub.add_parser("fit", help="estimate causal effects from summary files")
    add_study_args(fit)
    fit.add_argument("--method", choices=["ivw", "mrbee", "mrbee-iter"], default="mrbee-iter")
    fit.add_argument("--fdr-q", type=float, default=0.05, dest="fdr_q")
    fit.set_defaults(func=cmd_fit)

    errcov = sub.add_parser("errcov", help="estimate the error covariance from null variants")
    add_study_args(errcov)
    errcov.set_defaults(func=cmd_errcov)

    sim = sub.add_parser("simulate", help="run a replication sweep from a JSON config")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", required=True)
    sim.add_argument("--reps", type=int, default=None, help="override replication count")
    sim.add_argument("--seed", type=int, default=None, help="override seed")
    sim.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    sim.set_defaults(func=cmd_simulate)

    theory = sub.add_parser("theory", help="print closed-form predictions for a spec JSON")
    theory.add_argument("--config", required=True)
    theory.add_argument("--ivw-regime", action="append", choices=["i", "ii", "iii", "iv"], dest="ivw_regime")
    theory.add_argument("--mrbee-regime", action="append", choices=["i", "ii", "iii"], dest="mrbee_regime")
    theory.add_argument("--c0", type=float, default=None)
    theory.set_defaults(func=cmd_theory)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        # argparse exits with 2 on usage errors, matching our convention
        return int(err.code) if err.code is not None else EXIT_INPUT
    try:
        return args.func(args)
    except InputError as err:
        print(f"mrbee: input error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except (FileNotFoundError, json.JSONDecodeError, KeyError, ValueError) as err:
        print(f"mrbee: input error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except EstimationError as err:
        print(f"mrbee: estimation failed: {err}", file=sys.stderr)
        return EXIT_ESTIMATION
    except MrbeeError as err:
        print(f"mrbee: error: {err}", file=sys.stderr)
        return EXIT_ESTIMATION


if __name__ == "__main__":
    sys.exit(main())
