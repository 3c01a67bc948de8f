"""Pipeline orchestration: per-year analysis, ratio sweeps, synthetic panels.

Pure functions shared by the CLI. Year and sweep evaluations may run in a
thread pool; assembly is always ordered by (year, rho) so outputs are
byte-identical regardless of scheduling.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .contagion import DiffusionParams, critical_distance, effective_decay, kappa_ratio
from .errors import ContagionLabError
from .graph import TopologyReport, build_network, laplacian_spectrum, topology_report
from .ingest import BankPanel, BankRecord, assign_treatment, panel_csv_text
from .reconstruct import (
    FixedRatio,
    ReconstructionConfig,
    reconstruct_exposures,
    reconstruction_config_from_json,
)

SCHEMA_VERSION = 1
OUTPUT_DIR_ENV = "CONTAGION_LAB_OUTPUT_DIR"


# --- configuration ---------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    """Everything a pipeline command needs, JSON-loadable, flags win."""

    input_path: str = ""
    years: tuple[int, ...] = ()
    method: ReconstructionConfig = field(default_factory=ReconstructionConfig)
    ratio_sweep: tuple[float, float, int] | None = None  # (min, max, steps)
    bootstrap: dict | None = None   # {"B": int, "level": float, "seed": int}
    did: dict | None = None         # {"base_year": int, "quantile": float}
    output_dir: str = "."
    seed: int = 0
    diffusion_D: float = 1.0
    diffusion_kappa: float = 0.0
    d_star_epsilon: float = 0.1
    balanced: bool = False
    delimiter: str = ","
    workers: int = 1

    def __post_init__(self):
        if self.ratio_sweep is not None:
            lo, hi, steps = self.ratio_sweep
            if not (0.0 < lo < 1.0 and 0.0 < hi < 1.0):
                raise ValueError("ratio sweep bounds must lie in (0, 1)")
            if lo > hi:
                raise ValueError("ratio sweep min must be <= max")
            if steps < 1:
                raise ValueError("ratio sweep needs at least 1 step")

    def params(self) -> DiffusionParams:
        return DiffusionParams(D=self.diffusion_D, kappa=self.diffusion_kappa)

    def to_json_dict(self) -> dict:
        return {
            "input_path": self.input_path,
            "years": list(self.years),
            "method": self.method.to_json_dict(),
            "ratio_sweep": list(self.ratio_sweep) if self.ratio_sweep else None,
            "bootstrap": self.bootstrap,
            "did": self.did,
            "output_dir": self.output_dir,
            "seed": self.seed,
            "diffusion_D": self.diffusion_D,
            "diffusion_kappa": self.diffusion_kappa,
            "d_star_epsilon": self.d_star_epsilon,
            "balanced": self.balanced,
            "delimiter": self.delimiter,
            "workers": self.workers,
        }


def run_config_from_json(d: dict) -> RunConfig:
    return RunConfig(
        input_path=d.get("input_path", ""),
        years=tuple(d.get("years", ())),
        method=(reconstruction_config_from_json(d["method"])
                if "method" in d else ReconstructionConfig()),
        ratio_sweep=tuple(d["ratio_sweep"]) if d.get("ratio_sweep") else None,
        bootstrap=d.get("bootstrap"),
        did=d.get("did"),
        output_dir=d.get("output_dir", "."),
        seed=d.get("seed", 0),
        diffusion_D=d.get("diffusion_D", 1.0),
        diffusion_kappa=d.get("diffusion_kappa", 0.0),
        d_star_epsilon=d.get("d_star_epsilon", 0.1),
        balanced=d.get("balanced", False),
        delimiter=d.get("delimiter", ","),
        workers=d.get("workers", 1),
    )


# --- per-year analysis -------------------------------------------------------------

@dataclass(frozen=True)
class YearReport:
    """One year's connectivity, decay parameters, and topology."""

    year: int
    n_banks: int
    lambda2: float
    kappa_eff: float
    d_star: float
    lambda_n: float
    n_components: int
    topology: TopologyReport

    def to_json_dict(self) -> dict:
        return {
            "year": self.year,
            "n_banks": self.n_banks,
            "lambda2": self.lambda2,
            "kappa_eff": self.kappa_eff,
            "d_star": self.d_star,
            "lambda_n": self.lambda_n,
            "n_components": self.n_components,
            "topology": self.topology.to_json_dict(),
        }


def year_report(year: int, assets: np.ndarray, bank_ids: Sequence[str],
                cfg: RunConfig) -> YearReport:
    exposures = reconstruct_exposures(assets, cfg.method, bank_ids)
    net = build_network(exposures, cfg.method.min_edge_threshold)
    spectrum = laplacian_spectrum(net)
    params = cfg.params()
    k_eff = effective_decay(spectrum.lambda2, params)
    return YearReport(
        year=year,
        n_banks=len(assets),
        lambda2=spectrum.lambda2,
        kappa_eff=k_eff,
        d_star=critical_distance(k_eff, cfg.d_star_epsilon),
        lambda_n=spectrum.lambda_n,
        n_components=spectrum.n_components(),
        topology=topology_report(net),
    )


def _pct(new: float, old: float) -> float:
    return 100.0 * (new - old) / old


def cross_year_summary(reports: Sequence[YearReport]) -> dict:
    """Adjacent and overall changes in lambda2 and kappa_eff."""
    pairs = []
    for prev, cur in zip(reports, reports[1:]):
        pairs.append({
            "from": prev.year,
            "to": cur.year,
            "delta_lambda2": cur.lambda2 - prev.lambda2,
            "pct_lambda2": _pct(cur.lambda2, prev.lambda2),
            "delta_kappa_eff": cur.kappa_eff - prev.kappa_eff,
            "pct_kappa_eff": _pct(cur.kappa_eff, prev.kappa_eff),
            "kappa_ratio": kappa_ratio(cur.lambda2, prev.lambda2),
        })
    summary = {"adjacent": pairs}
    if len(reports) >= 2:
        first, last = reports[0], reports[-1]
        summary["overall"] = {
            "from": first.year,
            "to": last.year,
            "delta_lambda2": last.lambda2 - first.lambda2,
            "pct_lambda2": _pct(last.lambda2, first.lambda2),
            "delta_kappa_eff": last.kappa_eff - first.kappa_eff,
            "pct_kappa_eff": _pct(last.kappa_eff, first.kappa_eff),
            "kappa_ratio": kappa_ratio(last.lambda2, first.lambda2),
        }
    return summary


def analyze_panel(panel: BankPanel, cfg: RunConfig) -> dict:
    """Reconstruction -> network -> spectrum -> decay -> topology, per year."""
    years = list(cfg.years) if cfg.years else list(panel.years)
    for yr in years:
        if yr not in panel.years:
            raise ContagionLabError(f"requested year {yr} not in panel")

    def one(year: int) -> YearReport:
        ids, assets = panel.assets_for_year(year)
        try:
            return year_report(year, assets, ids, cfg)
        except ContagionLabError as exc:
            raise type(exc)(f"year {year}: {exc}") from exc

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            reports = list(pool.map(one, years))
    else:
        reports = [one(y) for y in years]

    return {
        "years": [r.to_json_dict() for r in reports],
        "summary": cross_year_summary(reports),
    }


# --- ratio sweep --------------------------------------------------------------------

def sweep_ratios(panel: BankPanel, cfg: RunConfig) -> dict:
    """lambda2 over a grid of fixed interbank ratios, per year.

    Also reports, per year, the log-log regression slope of lambda2 on
    rho (the observed scaling exponent) and, per rho, the percentage
    change of lambda2 between the first and last years.
    """
    if cfg.ratio_sweep is None:
        raise ValueError("ratio_sweep is not configured")
    lo, hi, steps = cfg.ratio_sweep
    rhos = [lo] if steps == 1 or lo == hi else list(np.linspace(lo, hi, steps))
    years = list(cfg.years) if cfg.years else list(panel.years)

    def one(job: tuple[int, float]) -> float:
        year, rho = job
        _, assets = panel.assets_for_year(year)
        method = ReconstructionConfig(
            method=cfg.method.method,
            ratio_rule=FixedRatio(rho),
            fitness_alpha=cfg.method.fitness_alpha,
            min_edge_threshold=cfg.method.min_edge_threshold,
        )
        exposures = reconstruct_exposures(assets, method)
        net = build_network(exposures, method.min_edge_threshold)
        return laplacian_spectrum(net).lambda2

    jobs = [(year, rho) for year in years for rho in rhos]
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            flat = list(pool.map(one, jobs))
    else:
        flat = [one(j) for j in jobs]
    grid = {year: {} for year in years}
    for (year, rho), lam in zip(jobs, flat):
        grid[year][rho] = lam

    exponents = {}
    for year in years:
        lams = np.array([grid[year][rho] for rho in rhos])
        if len(rhos) >= 2:
            slope = np.polyfit(np.log(rhos), np.log(lams), 1)[0]
            exponents[year] = float(slope)

    pct_changes = {}
    if len(years) >= 2:
        first, last = years[0], years[-1]
        for rho in rhos:
            pct_changes[rho] = _pct(grid[last][rho], grid[first][rho])

    return {
        "rhos": list(map(float, rhos)),
        "years": years,
        "lambda2": {str(year): {repr(float(rho)): grid[year][rho] for rho in rhos}
                    for year in years},
        "scaling_exponent": {str(y): v for y, v in exponents.items()},
        "pct_change_first_to_last": {repr(float(r)): v for r, v in pct_changes.items()},
    }


# --- synthetic panel generator --------------------------------------------------------

def synth_panel(n_banks: int, years: Sequence[int], seed: int = 0,
                log_mean: float = 11.0, log_sigma: float = 1.0,
                treated_shrink: float = 0.0, shrink_from_year: int = 2021,
                treat_quantile: float = 0.75, noise_sigma: float = 0.02,
                year_drift: float = 0.0) -> list[BankRecord]:
    """Deterministic synthetic bank panel with lognormal sizes.

    Base-year assets are lognormal(log_mean, log_sigma). Banks above the
    ``treat_quantile`` of base-year assets shrink by ``treated_shrink``
    (a fraction) in every year >= ``shrink_from_year``, mimicking
    differential deleveraging of the largest institutions. Idiosyncratic
    lognormal noise of scale ``noise_sigma`` and a common per-year drift
    complete the data-generating process.
    """
    if n_banks < 3:
        raise ValueError("need at least 3 banks")
    years = sorted(int(y) for y in years)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed))
    base = rng.normal(log_mean, log_sigma, size=n_banks)
    levels = []
    for t_index, year in enumerate(years):
        noise = rng.normal(0.0, noise_sigma, size=n_banks) if noise_sigma > 0 else np.zeros(n_banks)
        levels.append(base + year_drift * t_index + noise)
    # treatment is decided on *observed* first-year assets so that
    # assign_treatment on the emitted panel recovers the same flags
    observed0 = np.exp(levels[0])
    cutoff = np.quantile(observed0, treat_quantile)
    treated = observed0 > cutoff
    records = []
    for year, level in zip(years, levels):
        shrink_on = year >= shrink_from_year and treated_shrink > 0
        for i in range(n_banks):
            li = level[i]
            if shrink_on and treated[i]:
                li += math.log(1.0 - treated_shrink)
            records.append(BankRecord(
                bank_id=f"SYN{i:04d}",
                year=year,
                total_assets=float(math.exp(li)),
            ))
    return records


def synth_panel_csv(n_banks: int, years: Sequence[int], **kwargs) -> str:
    return panel_csv_text(synth_panel(n_banks, years, **kwargs))


# --- DID over a panel ------------------------------------------------------------------

def did_from_panel(panel: BankPanel, base_year: int, quantile: float,
                   log_outcome: bool = True,
                   outcomes: dict[tuple[str, int], float] | None = None):
    """Assemble DID observations from a panel and run the regression.

    Default outcome is log total assets; ``outcomes`` overrides with an
    explicit (bank_id, year) -> value map (used by the CLI for custom
    outcome columns).
    """
    from .stats import did_regress

    treatment = assign_treatment(panel, base_year, quantile)
    obs = []
    for rec in panel.records:
        if outcomes is not None:
            val = outcomes[(rec.bank_id, rec.year)]
        else:
            val = math.log(rec.total_assets) if log_outcome else rec.total_assets
        obs.append((rec.bank_id, rec.year, val))
    return did_regress(obs, treatment), treatment


# --- serialization helpers ---------------------------------------------------------------

def ensure_writable(directory: str | Path) -> None:
    """Create the output directory and verify it accepts writes."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    probe = directory / ".write_probe"
    try:
        with open(probe, "w", encoding="utf-8") as fh:
            fh.write("")
    finally:
        try:
            os.unlink(probe)
        except OSError:
            pass


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write via a temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def envelope(command: str, cfg_dict: dict, results: dict) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": cfg_dict,
        "results": results,
    }


def dump_json(obj: dict) -> str:
    """Deterministic JSON: sorted keys, repr floats (exact round trip)."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def render_table(headers: Sequence[str], rows: Sequence[Sequence], title: str = "") -> str:
    """Aligned plain-text table for terminal output."""
    cells = [[str(h) for h in headers]]
    for row in rows:
        cells.append([f"{v:.4f}" if isinstance(v, float) else str(v) for v in row])
    widths = [max(len(r[c]) for r in cells) for c in range(len(headers))]
    lines = []
    if title:
        lines.append(title)
    sep = "-+-".join("-" * w for w in widths)
    lines.append(" | ".join(h.ljust(w) for h, w in zip(cells[0], widths)))
    lines.append(sep)
    for row in cells[1:]:
        lines.append(" | ".join(v.rjust(w) for v, w in zip(row, widths)))
    return "\n".join(lines) + "\n"
