"""Command-line interface.

    contagion-lab <analyze|sweep|bootstrap|permute|placebo|did|fit|synth> [flags]

Each command writes one JSON envelope (schema_version 1) into the output
directory, atomically, plus optional CSV side files; ``--table`` echoes an
aligned text table. Exit codes: 0 success, 2 usage, 3 I/O, 4 numeric/model.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import pipeline
from .errors import (EXIT_IO, EXIT_MODEL, EXIT_OK, EXIT_USAGE,
                     ContagionLabError, MissingColumn)
from .graph import build_network
from .ingest import balanced_panel, load_panel
from .pipeline import (
    OUTPUT_DIR_ENV,
    RunConfig,
    atomic_write_text,
    dump_json,
    ensure_writable,
    envelope,
    render_table,
    run_config_from_json,
)
from .reconstruct import (
    DEFAULT_EDGE_THRESHOLD,
    FixedRatio,
    LinearLogRatio,
    ReconstructionConfig,
    SizeThresholdRatio,
    exposure_from_csv_text,
)
from .stats import bootstrap_lambda2, fit_distributions, permutation_test, placebo_null


def _ratio_rule_from_args(args) -> "FixedRatio | SizeThresholdRatio | LinearLogRatio":
    if getattr(args, "size_dependent", False):
        return SizeThresholdRatio()
    if getattr(args, "linear_log", False):
        return LinearLogRatio()
    return FixedRatio(rho=getattr(args, "rho", 0.05))


def _build_run_config(args) -> RunConfig:
    base = {}
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            base = json.load(fh)
    cfg = run_config_from_json(base)

    # command-line flags override the config file
    overrides = {}
    if getattr(args, "input", None):
        overrides["input_path"] = args.input
    if getattr(args, "output_dir", None):
        overrides["output_dir"] = args.output_dir
    elif os.environ.get(OUTPUT_DIR_ENV):
        overrides["output_dir"] = os.environ[OUTPUT_DIR_ENV]
    if getattr(args, "years", None):
        overrides["years"] = tuple(int(y) for y in args.years.split(","))
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "workers", None):
        overrides["workers"] = args.workers
    if getattr(args, "balanced", False):
        overrides["balanced"] = True
    if getattr(args, "delimiter", None):
        overrides["delimiter"] = args.delimiter
    if getattr(args, "d_coeff", None) is not None:
        overrides["diffusion_D"] = args.d_coeff
    if getattr(args, "kappa", None) is not None:
        overrides["diffusion_kappa"] = args.kappa
    if getattr(args, "sweep_min", None) is not None:
        overrides["ratio_sweep"] = (args.sweep_min, args.sweep_max, args.sweep_steps)

    rule_flags = (getattr(args, "rho", None) is not None
                  or getattr(args, "size_dependent", False)
                  or getattr(args, "linear_log", False))
    if rule_flags or getattr(args, "method", None) \
            or getattr(args, "epsilon", None) is not None \
            or getattr(args, "fitness_alpha", None) is not None:
        overrides["method"] = ReconstructionConfig(
            method=getattr(args, "method", None) or cfg.method.method,
            ratio_rule=_ratio_rule_from_args(args) if rule_flags else cfg.method.ratio_rule,
            fitness_alpha=getattr(args, "fitness_alpha", None) or cfg.method.fitness_alpha,
            min_edge_threshold=args.epsilon if getattr(args, "epsilon", None) is not None
            else cfg.method.min_edge_threshold,
        )
    return replace(cfg, **overrides) if overrides else cfg


def _load(cfg: RunConfig):
    panel = load_panel(cfg.input_path, delimiter=cfg.delimiter)
    if cfg.balanced:
        panel = balanced_panel(panel)
    return panel


def _emit(cfg_output_dir: str, name: str, payload: dict, table: str | None,
          show_table: bool) -> Path:
    out_dir = Path(cfg_output_dir)
    path = out_dir / f"{name}.json"
    atomic_write_text(path, dump_json(payload))
    if show_table and table:
        sys.stdout.write(table)
    else:
        sys.stdout.write(f"wrote {path}\n")
    return path


# --- commands ------------------------------------------------------------------

def cmd_analyze(args) -> int:
    cfg = _build_run_config(args)
    ensure_writable(cfg.output_dir)
    panel = _load(cfg)
    results = pipeline.analyze_panel(panel, cfg)
    if args.eigenvalues_csv:
        from .graph import eigenvalues_csv_text, laplacian_spectrum
        from .reconstruct import reconstruct_exposures
        years = list(cfg.years) if cfg.years else list(panel.years)
        for year in years:
            ids, assets = panel.assets_for_year(year)
            exposures = reconstruct_exposures(assets, cfg.method, ids)
            net = build_network(exposures, cfg.method.min_edge_threshold)
            text = eigenvalues_csv_text(laplacian_spectrum(net))
            atomic_write_text(Path(cfg.output_dir) / f"eigenvalues_{year}.csv", text)
    payload = envelope("analyze", cfg.to_json_dict(), results)
    rows = [
        (r["year"], r["n_banks"], r["lambda2"], r["kappa_eff"], r["d_star"])
        for r in results["years"]
    ]
    table = render_table(
        ["year", "banks", "lambda2", "kappa_eff", "d_star"], rows,
        title="Algebraic connectivity by year",
    )
    _emit(cfg.output_dir, "analyze", payload, table, args.table)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _build_run_config(args)
    ensure_writable(cfg.output_dir)
    if cfg.ratio_sweep is None:
        cfg = RunConfig(**{**_cfg_kwargs(cfg), "ratio_sweep": (0.01, 0.10, 10)})
    panel = _load(cfg)
    results = pipeline.sweep_ratios(panel, cfg)
    payload = envelope("sweep", cfg.to_json_dict(), results)
    rows = []
    for rho in results["rhos"]:
        row = [rho] + [results["lambda2"][str(y)][repr(float(rho))] for y in results["years"]]
        rows.append(row)
    table = render_table(["rho", *[str(y) for y in results["years"]]], rows,
                         title="lambda2 by interbank ratio")
    _emit(cfg.output_dir, "sweep", payload, table, args.table)
    return EXIT_OK


def cmd_bootstrap(args) -> int:
    cfg = _build_run_config(args)
    ensure_writable(cfg.output_dir)
    panel = _load(cfg)
    year = args.year if args.year is not None else panel.years[-1]
    _, assets = panel.assets_for_year(year)
    section = cfg.bootstrap or {}
    B = args.B if args.B is not None else int(section.get("B", 100))
    level = args.level if args.level is not None else float(section.get("level", 0.95))
    seed = args.seed if args.seed is not None else int(section.get("seed", cfg.seed))
    result = bootstrap_lambda2(assets, cfg.method, B=B, level=level,
                               seed=seed, workers=cfg.workers)
    results = {"year": year, **result.to_json_dict()}
    payload = envelope("bootstrap", cfg.to_json_dict(), results)
    table = render_table(
        ["year", "point", "ci_low", "ci_high", "B_eff"],
        [(year, result.point, result.ci_low, result.ci_high, result.B_effective)],
        title=f"Bootstrap lambda2 (level={level})",
    )
    _emit(cfg.output_dir, "bootstrap", payload, table, args.table)
    return EXIT_OK


def _read_two_groups(path: str, group_col: str, value_col: str):
    groups: dict[str, list[float]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or group_col not in reader.fieldnames \
                or value_col not in reader.fieldnames:
            raise MissingColumn(f"need columns {group_col!r} and {value_col!r}")
        for row in reader:
            groups.setdefault(row[group_col], []).append(float(row[value_col]))
    if len(groups) != 2:
        raise ContagionLabError(f"expected exactly 2 groups, got {sorted(groups)}")
    (ga, va), (gb, vb) = sorted(groups.items())
    return ga, va, gb, vb


def cmd_permute(args) -> int:
    cfg = _build_run_config(args)
    ensure_writable(cfg.output_dir)
    ga, va, gb, vb = _read_two_groups(cfg.input_path, args.group_column, args.value_column)
    p = permutation_test(va, vb, n_perm=args.n_perm, seed=cfg.seed)
    t_obs = float(np.mean(va) - np.mean(vb))
    results = {"group_a": ga, "group_b": gb, "n_a": len(va), "n_b": len(vb),
               "t_obs": t_obs, "n_perm": args.n_perm, "p_value": p}
    payload = envelope("permute", cfg.to_json_dict(), results)
    table = render_table(["groups", "T_obs", "p_value"],
                         [(f"{ga} vs {gb}", t_obs, p)], title="Permutation test")
    _emit(cfg.output_dir, "permute", payload, table, args.table)
    return EXIT_OK


def cmd_placebo(args) -> int:
    cfg = _build_run_config(args)
    ensure_writable(cfg.output_dir)
    with open(cfg.input_path, "r", encoding="utf-8") as fh:
        exposures = exposure_from_csv_text(fh.read())
    net = build_network(exposures, args.epsilon if args.epsilon is not None
                        else DEFAULT_EDGE_THRESHOLD)
    result = placebo_null(net, n_draws=args.n_draws, seed=cfg.seed)
    payload = envelope("placebo", cfg.to_json_dict(), result.to_json_dict())
    table = render_table(
        ["observed", "null_mean", "percentile", "tied"],
        [(result.observed, float(np.mean(result.null_lambda2)),
          result.percentile, str(result.tied))],
        title=f"Placebo null ({args.n_draws} weight shuffles)",
    )
    _emit(cfg.output_dir, "placebo", payload, table, args.table)
    return EXIT_OK


def cmd_did(args) -> int:
    cfg = _build_run_config(args)
    ensure_writable(cfg.output_dir)
    section = cfg.did or {}
    base_year = args.base_year if args.base_year is not None else section.get("base_year")
    quantile = args.quantile if args.quantile is not None else float(section.get("quantile", 0.75))
    if base_year is None:
        sys.stderr.write("error: --base-year is required (flag or config)\n")
        return EXIT_USAGE
    base_year = int(base_year)
    panel = _load(cfg)
    outcomes = None
    if args.outcome_column != "total_assets":
        outcomes = {}
        with open(cfg.input_path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh, delimiter=cfg.delimiter)
            if reader.fieldnames is None or args.outcome_column not in reader.fieldnames:
                raise MissingColumn(f"outcome column {args.outcome_column!r} not found")
            for row in reader:
                key = (row["bank_id"].strip(), int(row["year"]))
                val = float(row[args.outcome_column])
                outcomes[key] = math.log(val) if args.log else val
    result, treatment = pipeline.did_from_panel(
        panel, base_year=base_year, quantile=quantile,
        log_outcome=args.log, outcomes=outcomes,
    )
    results = {
        "base_year": base_year,
        "quantile": quantile,
        "n_treated": len(treatment.treated_ids()),
        **result.to_json_dict(),
    }
    payload = envelope("did", cfg.to_json_dict(), results)
    rows = [(term, result.coefficients[term], result.clustered_se[term])
            for term in sorted(result.coefficients) if term.startswith("treated_post")]
    table = render_table(["term", "coef", "clustered_se"], rows,
                         title="Difference-in-differences (two-way FE)")
    _emit(cfg.output_dir, "did", payload, table, args.table)
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = _build_run_config(args)
    ensure_writable(cfg.output_dir)
    values: list[float] = []
    with open(cfg.input_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames and args.column in reader.fieldnames:
            for row in reader:
                values.append(float(row[args.column]))
        else:
            fh.seek(0)
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    values.append(float(line))
                except ValueError:
                    continue  # header or stray text
    result = fit_distributions(values, x_min=args.x_min, scan_xmin=args.scan_xmin)
    payload = envelope("fit", cfg.to_json_dict(), result.to_json_dict())
    label = {"lognormal": "Lognormal", "power_law": "Power law",
             "inconclusive": "Inconclusive"}[result.best_fit]
    table = render_table(
        ["alpha_hat", "LR(PL-LN)", "p_value", "KS(PL)"],
        [(result.alpha_hat, result.lr_pl_vs_ln, result.p_value, result.ks_stat)],
        title="Tail distribution comparison",
    ) + f"Best Fit: {label}\n"
    _emit(cfg.output_dir, "fit", payload, table, args.table)
    if not args.table:
        sys.stdout.write(f"Best Fit: {label}\n")
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = _build_run_config(args)
    years = [int(y) for y in args.years.split(",")]
    text = pipeline.synth_panel_csv(
        args.n, years, seed=cfg.seed, log_mean=args.log_mean,
        log_sigma=args.log_sigma, treated_shrink=args.shrink,
        shrink_from_year=args.shrink_from, treat_quantile=args.quantile,
        noise_sigma=args.noise,
    )
    out = Path(args.out) if args.out else Path(cfg.output_dir) / "synthetic_panel.csv"
    atomic_write_text(out, text)
    sys.stdout.write(f"wrote {out}\n")
    return EXIT_OK


# --- parser --------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser, with_input: bool = True) -> None:
    if with_input:
        p.add_argument("--input", help="input CSV path")
    p.add_argument("--config", help="JSON config file; flags override")
    p.add_argument("--output-dir", dest="output_dir", help="report directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--table", action="store_true", help="print an aligned text table")
    p.add_argument("--delimiter", default=None)


def _add_method(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", choices=["max_entropy", "kde", "fitness", "min_density"])
    p.add_argument("--rho", type=float, default=None, help="fixed interbank ratio")
    p.add_argument("--size-dependent", action="store_true", dest="size_dependent",
                   help="3%%/7%% ratios split at the 75th size percentile")
    p.add_argument("--linear-log", action="store_true", dest="linear_log",
                   help="ratio 0.08 - 0.03*ln(T/mean)")
    p.add_argument("--fitness-alpha", type=float, default=None, dest="fitness_alpha")
    p.add_argument("--epsilon", type=float, default=None,
                   help="edge threshold in millions")
    p.add_argument("--balanced", action="store_true",
                   help="restrict to banks present in every year")
    p.add_argument("--years", default=None, help="comma-separated year filter")
    p.add_argument("--d-coeff", type=float, default=None, dest="d_coeff",
                   help="diffusion coefficient D")
    p.add_argument("--kappa", type=float, default=None, help="intrinsic decay rate")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="contagion-lab",
        description="Interbank network reconstruction and contagion analytics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="per-year reconstruction, spectrum, decay, topology")
    _add_common(p)
    _add_method(p)
    p.add_argument("--eigenvalues-csv", action="store_true", dest="eigenvalues_csv",
                   help="also dump per-year eigenvalue CSVs for plotting")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", help="lambda2 over a grid of interbank ratios")
    _add_common(p)
    _add_method(p)
    p.add_argument("--sweep-min", type=float, default=None, dest="sweep_min")
    p.add_argument("--sweep-max", type=float, default=None, dest="sweep_max")
    p.add_argument("--sweep-steps", type=int, default=10, dest="sweep_steps")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bootstrap", help="bank-resampling CI for lambda2")
    _add_common(p)
    _add_method(p)
    p.add_argument("--year", type=int, default=None, help="default: last panel year")
    p.add_argument("-B", "--replicates", dest="B", type=int, default=None)
    p.add_argument("--level", type=float, default=None)
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("permute", help="two-sided permutation test on two groups")
    _add_common(p)
    p.add_argument("--group-column", default="group")
    p.add_argument("--value-column", default="value")
    p.add_argument("--n-perm", type=int, default=10_000, dest="n_perm")
    p.set_defaults(func=cmd_permute)

    p = sub.add_parser("placebo", help="edge-weight shuffle null for lambda2")
    _add_common(p)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--n-draws", type=int, default=1000, dest="n_draws")
    p.set_defaults(func=cmd_placebo)

    p = sub.add_parser("did", help="difference-in-differences on the panel")
    _add_common(p)
    p.add_argument("--base-year", type=int, default=None, dest="base_year")
    p.add_argument("--quantile", type=float, default=None)
    p.add_argument("--outcome-column", default="total_assets", dest="outcome_column")
    log_group = p.add_mutually_exclusive_group()
    log_group.add_argument("--log", dest="log", action="store_true", default=True)
    log_group.add_argument("--no-log", dest="log", action="store_false")
    p.add_argument("--balanced", action="store_true")
    p.add_argument("--years", default=None)
    p.set_defaults(func=cmd_did)

    p = sub.add_parser("fit", help="power law vs lognormal tail comparison")
    _add_common(p)
    p.add_argument("--column", default="value")
    p.add_argument("--x-min", type=float, default=None, dest="x_min")
    p.add_argument("--scan-xmin", action="store_true", dest="scan_xmin")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("synth", help="generate a deterministic synthetic panel")
    _add_common(p, with_input=False)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--years", default="2018,2021,2023")
    p.add_argument("--log-mean", type=float, default=11.0, dest="log_mean")
    p.add_argument("--log-sigma", type=float, default=1.0, dest="log_sigma")
    p.add_argument("--shrink", type=float, default=0.0,
                   help="treated-bank shrink fraction from --shrink-from on")
    p.add_argument("--shrink-from", type=int, default=2021, dest="shrink_from")
    p.add_argument("--quantile", type=float, default=0.75)
    p.add_argument("--noise", type=float, default=0.02)
    p.add_argument("--out", default=None, help="output CSV (default: output dir)")
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        sys.stderr.write(f"error: input not found: {exc.filename or exc}\n")
        return EXIT_IO
    except OSError as exc:
        sys.stderr.write(f"error: I/O failure: {exc}\n")
        return EXIT_IO
    except ContagionLabError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.exit_code
    except ValueError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
