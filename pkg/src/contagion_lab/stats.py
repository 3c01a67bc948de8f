"""Resampling inference, hypothesis tests, distribution fits, and panel DID.

Every randomized procedure derives replicate RNG streams deterministically
from (master seed, replicate index), so results are bit-identical across
reruns and across worker counts.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import f as f_dist
from scipy.stats import norm as norm_dist

from .errors import (
    CollinearDesign,
    InsufficientData,
    NonPositiveSample,
    TooFewClusters,
    TooFewPoints,
    ZeroVariance,
)
from .graph import build_network, laplacian_spectrum, WeightedNetwork
from .ingest import TreatmentAssignment
from .reconstruct import ReconstructionConfig, reconstruct_exposures


def _replicate_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for replicate ``index`` of master ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


# --- bootstrap ----------------------------------------------------------------

@dataclass(frozen=True)
class BootstrapResult:
    """Point estimate with percentile CI over bootstrap replicates.

    CI bounds are order statistics of the replicate vector. B_effective
    counts replicates that survived (degenerate resamples are skipped).
    """

    point: float
    replicates: np.ndarray
    ci_low: float
    ci_high: float
    level: float
    seed: int
    B: int
    B_effective: int
    n_degenerate: int = 0

    def to_json_dict(self) -> dict:
        return {
            "point": self.point,
            "replicates": [float(v) for v in self.replicates],
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "level": self.level,
            "seed": self.seed,
            "B": self.B,
            "B_effective": self.B_effective,
            "n_degenerate": self.n_degenerate,
        }


def _lambda2_pipeline(assets: np.ndarray, cfg: ReconstructionConfig) -> float:
    exposures = reconstruct_exposures(assets, cfg)
    net = build_network(exposures, cfg.min_edge_threshold)
    return laplacian_spectrum(net).lambda2


def bootstrap_lambda2(assets: Sequence[float] | np.ndarray,
                      cfg: ReconstructionConfig,
                      B: int = 100, level: float = 0.95, seed: int = 0,
                      workers: int = 1) -> BootstrapResult:
    """Bank-level bootstrap of algebraic connectivity.

    Each replicate draws n banks with replacement, re-runs the configured
    reconstruction and the Laplacian spectrum, and records lambda2. The
    percentile interval at ``level`` is read off the sorted replicates.
    Replicates whose resample has zero total assets are skipped and
    counted in ``n_degenerate``.
    """
    assets = np.asarray(assets, dtype=float)
    n = len(assets)
    if n < 3:
        raise InsufficientData("need at least 3 banks")
    if B < 10:
        raise InsufficientData("need at least 10 replicates")
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")

    point = _lambda2_pipeline(assets, cfg)

    def one(b: int) -> float:
        rng = _replicate_rng(seed, b)
        idx = rng.integers(0, n, size=n)
        sample = assets[idx]
        if sample.sum() <= 0:
            return math.nan
        return _lambda2_pipeline(sample, cfg)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            raw = list(pool.map(one, range(B)))
    else:
        raw = [one(b) for b in range(B)]

    replicates = np.array([v for v in raw if not math.isnan(v)])
    n_degenerate = B - len(replicates)
    if len(replicates) == 0:
        raise InsufficientData("all bootstrap replicates were degenerate")
    alpha = (1.0 - level) / 2.0
    ci_low = float(np.quantile(replicates, alpha, method="lower"))
    ci_high = float(np.quantile(replicates, 1.0 - alpha, method="higher"))
    return BootstrapResult(point=point, replicates=replicates, ci_low=ci_low,
                           ci_high=ci_high, level=level, seed=seed, B=B,
                           B_effective=len(replicates), n_degenerate=n_degenerate)


# --- permutation test ---------------------------------------------------------

def permutation_test(group_a: Sequence[float], group_b: Sequence[float],
                     n_perm: int = 10_000, seed: int = 0,
                     method: str = "auto") -> float:
    """Two-sided permutation p-value for a difference in group means.

    Monte Carlo mode counts sampled label permutations with |T| >= |T_obs|
    and applies the add-one estimator (r+1)/(n_perm+1), which never
    returns zero. When the label assignments can be enumerated within
    ``n_perm`` (or ``method="exhaustive"``), all C(n_a+n_b, n_a)
    assignments are scored instead, the observed assignment is excluded
    from the count, and the denominator is the assignment count plus one.
    """
    a = np.asarray(group_a, dtype=float)
    b = np.asarray(group_b, dtype=float)
    if len(a) == 0 or len(b) == 0:
        raise InsufficientData("both groups must be non-empty")
    pooled = np.concatenate([a, b])
    n_a = len(a)
    t_obs = abs(a.mean() - b.mean())

    def exceeds(t: float) -> bool:
        return t > t_obs or math.isclose(t, t_obs, rel_tol=1e-9, abs_tol=0.0)

    if method not in ("auto", "mc", "exhaustive"):
        raise ValueError(f"unknown method {method!r}")
    total = math.comb(len(pooled), n_a)
    exhaustive = method == "exhaustive" or (method == "auto" and total <= n_perm)

    if exhaustive:
        observed = tuple(range(n_a))
        r = 0
        for idx in combinations(range(len(pooled)), n_a):
            if idx == observed:
                continue
            sel = np.zeros(len(pooled), dtype=bool)
            sel[list(idx)] = True
            t = abs(pooled[sel].mean() - pooled[~sel].mean())
            if exceeds(t):
                r += 1
        return (r + 1) / (total + 1)

    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed))
    r = 0
    for _ in range(n_perm):
        perm = rng.permutation(pooled)
        t = abs(perm[:n_a].mean() - perm[n_a:].mean())
        if exceeds(t):
            r += 1
    return (r + 1) / (n_perm + 1)


# --- placebo weight shuffling ---------------------------------------------------

@dataclass(frozen=True)
class PlaceboResult:
    """Null distribution of lambda2 under edge-weight shuffling."""

    null_lambda2: np.ndarray
    observed: float
    percentile: float
    tied: bool

    def to_json_dict(self) -> dict:
        return {
            "null_lambda2": [float(v) for v in self.null_lambda2],
            "observed": self.observed,
            "percentile": self.percentile,
            "tied": self.tied,
        }


def placebo_null(net: WeightedNetwork, n_draws: int = 1000,
                 seed: int = 0) -> PlaceboResult:
    """Shuffle edge weights over the fixed edge set and recompute lambda2.

    The degree *support* is preserved (same edges) while the weight
    multiset is permuted uniformly at random. Returns the null vector and
    the percentile of the observed lambda2 within it; a tie flag is set
    when every draw equals the observed value (e.g. all weights equal).
    """
    edges = net.edges()
    if len(edges) < 2:
        raise InsufficientData("need at least 2 edges to shuffle")
    observed = laplacian_spectrum(net).lambda2
    weights = np.array([w for _, _, w in edges])
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed))
    null = np.empty(n_draws)
    for d in range(n_draws):
        shuffled = rng.permutation(weights)
        W = np.zeros_like(net.W)
        for (i, j, _), w in zip(edges, shuffled):
            W[i, j] = w
            W[j, i] = w
        null[d] = laplacian_spectrum(WeightedNetwork(net.bank_ids, W)).lambda2
    percentile = float(100.0 * np.mean(null <= observed))
    tied = bool(np.all(null == observed))
    return PlaceboResult(null_lambda2=null, observed=observed,
                         percentile=percentile, tied=tied)


# --- distribution fitting -------------------------------------------------------

@dataclass(frozen=True)
class FitComparison:
    """Power-law vs lognormal vs exponential tail fits above x_min.

    ``lr_pl_vs_ln`` is the total log-likelihood difference (power law
    minus lognormal); negative values favor the lognormal. ``p_value`` is
    the two-sided Vuong test p. ``ks_stat`` is the KS statistic of the
    power-law fit; per-family statistics are carried alongside.
    """

    alpha_hat: float
    x_min: float
    lognormal_mu: float
    lognormal_sigma: float
    exp_rate: float
    lr_pl_vs_ln: float
    vuong_stat: float
    p_value: float
    ks_stat: float
    ks_lognormal: float
    ks_exponential: float
    n_tail: int
    best_fit: str

    def to_json_dict(self) -> dict:
        return {
            "alpha_hat": self.alpha_hat,
            "x_min": self.x_min,
            "lognormal_mu": self.lognormal_mu,
            "lognormal_sigma": self.lognormal_sigma,
            "exp_rate": self.exp_rate,
            "lr_pl_vs_ln": self.lr_pl_vs_ln,
            "vuong_stat": self.vuong_stat,
            "p_value": self.p_value,
            "ks_stat": self.ks_stat,
            "ks_lognormal": self.ks_lognormal,
            "ks_exponential": self.ks_exponential,
            "n_tail": self.n_tail,
            "best_fit": self.best_fit,
        }


def power_law_mle(sample: Sequence[float] | np.ndarray, x_min: float) -> float:
    """Continuous power-law exponent alpha = 1 + m / sum(ln(x_i / x_min))."""
    x = np.asarray(sample, dtype=float)
    tail = x[x >= x_min]
    if len(tail) == 0:
        raise TooFewPoints("no points at or above x_min")
    denom = np.log(tail / x_min).sum()
    if denom <= 0:
        raise TooFewPoints("degenerate tail: all points equal x_min")
    return float(1.0 + len(tail) / denom)


def _ks_statistic(sorted_tail: np.ndarray, cdf: np.ndarray) -> float:
    m = len(sorted_tail)
    upper = np.arange(1, m + 1) / m
    lower = np.arange(0, m) / m
    return float(max(np.abs(upper - cdf).max(), np.abs(lower - cdf).max()))


def fit_distributions(sample: Sequence[float] | np.ndarray,
                      x_min: float | None = None,
                      scan_xmin: bool = False,
                      min_tail: int = 10) -> FitComparison:
    """Fit and compare tail distributions above x_min.

    Power law: closed-form MLE. Lognormal: mu, sigma are the mean and
    (MLE, ddof 0) std of ln x over the tail; its density is conditioned
    on x >= x_min when computing likelihoods so all families are
    normalized on the same support. Exponential: shifted, rate
    1/(mean - x_min). The Vuong statistic is the normalized per-point
    log-likelihood difference, negative favoring the lognormal.

    ``x_min`` defaults to the sample minimum; ``scan_xmin=True`` instead
    scans candidate x_min values and keeps the one minimizing the
    power-law KS statistic (leaving at least ``min_tail`` points).
    """
    x = np.asarray(sample, dtype=float)
    if np.any(x <= 0) or not np.all(np.isfinite(x)):
        raise NonPositiveSample("sample must be strictly positive and finite")

    if scan_xmin:
        ordered = np.sort(x)
        candidates = np.unique(x)
        tail_counts = len(x) - np.searchsorted(ordered, candidates, side="left")
        candidates = candidates[tail_counts >= min_tail]
        if len(candidates) == 0:
            raise TooFewPoints(f"no x_min leaves {min_tail} tail points")
        best = None
        for cand in candidates:
            try:
                fit = fit_distributions(x, x_min=float(cand), scan_xmin=False,
                                        min_tail=min_tail)
            except TooFewPoints:
                continue
            if best is None or fit.ks_stat < best.ks_stat:
                best = fit
        if best is None:
            raise TooFewPoints("all candidate x_min values were degenerate")
        return best

    x_min = float(x.min()) if x_min is None else float(x_min)
    tail = np.sort(x[x >= x_min])
    m = len(tail)
    if m < min_tail:
        raise TooFewPoints(f"only {m} points above x_min, need {min_tail}")
    if tail[0] == tail[-1]:
        raise TooFewPoints("degenerate sample: zero variance above x_min")

    alpha = power_law_mle(tail, x_min)
    log_tail = np.log(tail)
    mu = float(log_tail.mean())
    sigma = float(log_tail.std(ddof=0))
    exp_rate = float(1.0 / (tail.mean() - x_min)) if tail.mean() > x_min else math.inf

    # densities conditioned on x >= x_min
    ll_pl = (math.log(alpha - 1) - math.log(x_min)) - alpha * np.log(tail / x_min)
    ln_tailmass = max(1.0 - norm_dist.cdf((math.log(x_min) - mu) / sigma), 1e-300)
    ll_ln = (-np.log(tail * sigma * math.sqrt(2 * math.pi))
             - (log_tail - mu) ** 2 / (2 * sigma ** 2)
             - math.log(ln_tailmass))
    diffs = ll_pl - ll_ln
    lr = float(diffs.sum())
    sd = float(diffs.std(ddof=0))
    if sd > 0:
        vuong = float(math.sqrt(m) * diffs.mean() / sd)
        p_value = float(2.0 * norm_dist.sf(abs(vuong)))
    else:
        vuong = 0.0
        p_value = 1.0

    cdf_pl = 1.0 - (tail / x_min) ** (1.0 - alpha)
    ks_pl = _ks_statistic(tail, cdf_pl)
    cdf_ln_raw = norm_dist.cdf((log_tail - mu) / sigma)
    cdf_ln_at_min = norm_dist.cdf((math.log(x_min) - mu) / sigma)
    cdf_ln = (cdf_ln_raw - cdf_ln_at_min) / ln_tailmass
    ks_ln = _ks_statistic(tail, cdf_ln)
    cdf_exp = 1.0 - np.exp(-exp_rate * (tail - x_min))
    ks_exp = _ks_statistic(tail, cdf_exp)

    if p_value < 0.1:
        best_fit = "lognormal" if lr < 0 else "power_law"
    else:
        best_fit = "inconclusive"

    return FitComparison(
        alpha_hat=alpha, x_min=x_min, lognormal_mu=mu, lognormal_sigma=sigma,
        exp_rate=exp_rate, lr_pl_vs_ln=lr, vuong_stat=vuong, p_value=p_value,
        ks_stat=ks_pl, ks_lognormal=ks_ln, ks_exponential=ks_exp,
        n_tail=m, best_fit=best_fit,
    )


# --- structural break -----------------------------------------------------------

@dataclass(frozen=True)
class ChowResult:
    """Chow F-test of a structural break at a candidate year."""

    break_candidate: int
    f_stat: float
    p_value: float
    regime_means: tuple[float, float]
    model: str  # "linear" or "intercept_only"
    low_power: bool
    df: tuple[int, int]

    def to_json_dict(self) -> dict:
        return {
            "break_candidate": self.break_candidate,
            "f_stat": self.f_stat,
            "p_value": self.p_value,
            "regime_means": list(self.regime_means),
            "model": self.model,
            "low_power": self.low_power,
            "df": list(self.df),
        }


def _ols_rss(t: np.ndarray, y: np.ndarray, with_slope: bool) -> float:
    if with_slope:
        X = np.column_stack([np.ones_like(t), t])
    else:
        X = np.ones((len(t), 1))
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    return float(resid @ resid)


def chow_test(series: Mapping[int, float], break_year: int) -> ChowResult:
    """Pooled vs regime-split regression F-test at ``break_year``.

    Regime 1 is years <= break_year. Full linear regressions are used when
    both regimes have at least 3 points; otherwise both regimes drop to
    intercept-only comparisons (flagged low power), which is the only
    estimable form on a 3-point series.
    """
    years = np.array(sorted(series), dtype=float)
    y = np.array([series[int(t)] for t in years], dtype=float)
    n = len(years)
    if n < 3:
        raise InsufficientData("need at least 3 points")
    mask1 = years <= break_year
    n1, n2 = int(mask1.sum()), int((~mask1).sum())
    if n1 == 0 or n2 == 0:
        raise InsufficientData("break year leaves an empty regime")

    with_slope = min(n1, n2) >= 3
    k = 2 if with_slope else 1
    df2 = n - 2 * k
    if df2 < 1:
        raise InsufficientData("no residual degrees of freedom for the split fit")

    t = years - years.mean()  # centered for conditioning
    rss_pooled = _ols_rss(t, y, with_slope)
    rss1 = _ols_rss(t[mask1], y[mask1], with_slope)
    rss2 = _ols_rss(t[~mask1], y[~mask1], with_slope)
    num = (rss_pooled - rss1 - rss2) / k
    den = (rss1 + rss2) / df2
    # RSS values below roundoff of the data scale count as exact fits
    tss = float(((y - y.mean()) ** 2).sum())
    tiny = 1e-12 * max(tss, 1e-300)
    if den <= tiny:
        f_stat = 0.0 if num <= tiny else math.inf
    else:
        f_stat = max(num / den, 0.0)
    p_value = float(f_dist.sf(f_stat, k, df2)) if math.isfinite(f_stat) else 0.0
    return ChowResult(
        break_candidate=break_year,
        f_stat=float(f_stat),
        p_value=p_value,
        regime_means=(float(y[mask1].mean()), float(y[~mask1].mean())),
        model="linear" if with_slope else "intercept_only",
        low_power=not with_slope,
        df=(k, df2),
    )


# --- difference-in-differences ----------------------------------------------------

@dataclass(frozen=True)
class DidResult:
    """Two-way fixed-effects DID estimates with bank-clustered SEs."""

    coefficients: dict[str, float]
    clustered_se: dict[str, float]
    r_squared: float
    n_obs: int
    n_banks: int
    degenerate_terms: tuple[str, ...] = ()

    def to_json_dict(self) -> dict:
        return {
            "coefficients": dict(self.coefficients),
            "clustered_se": dict(self.clustered_se),
            "r_squared": self.r_squared,
            "n_obs": self.n_obs,
            "n_banks": self.n_banks,
            "degenerate_terms": list(self.degenerate_terms),
        }


def _did_design(bank_ids: Sequence[str], years: Sequence[int],
                treatment: TreatmentAssignment,
                interactions: Sequence[str],
                covariates: Mapping[str, Mapping[str, float]] | None):
    """Full-dummy design matrix and term names.

    Columns: intercept, bank dummies (drop first), year dummies (drop
    first), Treated x Post_y for every non-base year y, and for each
    requested covariate Z both Z x Post_y (double) and
    Treated x Post_y x Z (triple). Post_y = 1{year >= y}.
    """
    banks = sorted(set(bank_ids))
    yrs = sorted(set(years))
    if len(yrs) < 2:
        raise InsufficientData("need at least 2 years")
    treated = np.array([1.0 if treatment.treated.get(b, False) else 0.0
                        for b in bank_ids])
    year_arr = np.asarray(years)

    cols: list[np.ndarray] = [np.ones(len(bank_ids))]
    names: list[str] = ["intercept"]
    reported: list[str] = []
    for b in banks[1:]:
        cols.append((np.asarray(bank_ids) == b).astype(float))
        names.append(f"bank[{b}]")
    for yv in yrs[1:]:
        cols.append((year_arr == yv).astype(float))
        names.append(f"year[{yv}]")
        reported.append(f"year[{yv}]")
    post = {yv: (year_arr >= yv).astype(float) for yv in yrs[1:]}
    for yv in yrs[1:]:
        cols.append(treated * post[yv])
        names.append(f"treated_post{yv}")
        reported.append(f"treated_post{yv}")
    for z in interactions:
        if covariates is None:
            raise ValueError(f"interaction {z!r} requested without covariates")
        zvec = np.array([float(covariates[b][z]) for b in bank_ids])
        for yv in yrs[1:]:
            cols.append(zvec * post[yv])
            names.append(f"{z}_post{yv}")
            reported.append(f"{z}_post{yv}")
            cols.append(treated * post[yv] * zvec)
            names.append(f"treated_post{yv}_x_{z}")
            reported.append(f"treated_post{yv}_x_{z}")
    X = np.column_stack(cols)
    return X, names, reported


def did_regress(observations: Iterable[tuple[str, int, float]],
                treatment: TreatmentAssignment,
                interactions: Sequence[str] = (),
                covariates: Mapping[str, Mapping[str, float]] | None = None) -> DidResult:
    """Two-way FE DID with CR0 cluster-robust SEs clustered by bank.

    ``observations`` are (bank_id, year, outcome) triples. Estimated by
    full-dummy OLS (equivalent to the within transformation; see
    :func:`did_within_coefficients`). The CR0 sandwich is scaled by
    G/(G-1) * (N-1)/(N-K). SEs that collapse to zero (saturated designs)
    are flagged degenerate rather than dropped.
    """
    obs = list(observations)
    if not obs:
        raise InsufficientData("no observations")
    bank_ids = [o[0] for o in obs]
    years = [int(o[1]) for o in obs]
    y = np.array([float(o[2]) for o in obs])

    banks = sorted(set(bank_ids))
    G = len(banks)
    if G < 2:
        raise TooFewClusters("need at least 2 bank clusters")
    arms = {treatment.treated.get(b, False) for b in banks}
    if len(arms) < 2:
        raise CollinearDesign("all banks in one treatment arm")

    X, names, reported = _did_design(bank_ids, years, treatment, interactions, covariates)
    N, K = X.shape
    if np.linalg.matrix_rank(X) < K:
        raise CollinearDesign("design is rank deficient after FE absorption")

    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    tss = float(((y - y.mean()) ** 2).sum())
    r_squared = 1.0 - float(resid @ resid) / tss if tss > 0 else 0.0

    xtx_inv = np.linalg.inv(X.T @ X)
    meat = np.zeros((K, K))
    bank_arr = np.asarray(bank_ids)
    for b in banks:
        rows = bank_arr == b
        s = X[rows].T @ resid[rows]
        meat += np.outer(s, s)
    dfc = (G / (G - 1)) * ((N - 1) / (N - K)) if N > K else G / (G - 1)
    vcov = dfc * xtx_inv @ meat @ xtx_inv
    se = np.sqrt(np.clip(np.diagonal(vcov), 0.0, None))

    coef = {}
    ses = {}
    degenerate = []
    for name, b_val, s_val in zip(names, beta, se):
        if name.startswith("bank["):
            continue
        coef[name] = float(b_val)
        ses[name] = float(s_val)
        if name in reported and s_val <= 1e-12 * max(1.0, abs(b_val)):
            degenerate.append(name)
    return DidResult(coefficients=coef, clustered_se=ses, r_squared=max(r_squared, 0.0),
                     n_obs=N, n_banks=G, degenerate_terms=tuple(degenerate))


def did_within_coefficients(observations: Iterable[tuple[str, int, float]],
                            treatment: TreatmentAssignment,
                            interactions: Sequence[str] = (),
                            covariates: Mapping[str, Mapping[str, float]] | None = None,
                            tol: float = 1e-12, max_iter: int = 10_000) -> dict[str, float]:
    """Within-transformation estimates of the non-FE terms.

    Alternating bank/year demeaning (converges for unbalanced panels)
    applied to the outcome and every non-dummy regressor, then plain OLS.
    Must agree with :func:`did_regress` to high precision.
    """
    obs = list(observations)
    bank_ids = [o[0] for o in obs]
    years = [int(o[1]) for o in obs]
    y = np.array([float(o[2]) for o in obs])
    X, names, _ = _did_design(bank_ids, years, treatment, interactions, covariates)

    keep = [i for i, nm in enumerate(names)
            if not (nm == "intercept" or nm.startswith("bank[") or nm.startswith("year["))]
    Z = X[:, keep]
    kept_names = [names[i] for i in keep]

    bank_codes = np.unique(bank_ids, return_inverse=True)[1]
    year_codes = np.unique(years, return_inverse=True)[1]

    def demean(v: np.ndarray) -> np.ndarray:
        v = v.astype(float).copy()
        for _ in range(max_iter):
            before = v.copy()
            for codes in (bank_codes, year_codes):
                means = np.bincount(codes, weights=v) / np.bincount(codes)
                v -= means[codes]
            if np.abs(v - before).max() <= tol * max(1.0, np.abs(v).max()):
                break
        return v

    y_w = demean(y)
    Z_w = np.column_stack([demean(Z[:, j]) for j in range(Z.shape[1])])
    beta, *_ = np.linalg.lstsq(Z_w, y_w, rcond=None)
    return {nm: float(b) for nm, b in zip(kept_names, beta)}


# --- series utilities ------------------------------------------------------------

def series_correlation(a: Sequence[float], b: Sequence[float],
                       mode: str = "levels") -> float:
    """Pearson correlation of two aligned series, optionally transformed.

    Modes: "levels", "changes" (first differences), "pct_changes".
    """
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    if x.shape != y.shape:
        raise ValueError("series must have equal length")
    if mode == "levels":
        if len(x) < 2:
            raise InsufficientData("need at least 2 points")
    elif mode in ("changes", "pct_changes"):
        if len(x) < 3:
            raise InsufficientData("need at least 3 points for changes")
        if mode == "changes":
            x, y = np.diff(x), np.diff(y)
        else:
            x, y = np.diff(x) / x[:-1], np.diff(y) / y[:-1]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if np.std(x) == 0 or np.std(y) == 0:
        raise ZeroVariance("a series has zero variance")
    return float(np.corrcoef(x, y)[0, 1])


# --- leave-one-out stability -------------------------------------------------------

@dataclass(frozen=True)
class LeaveOneOutResult:
    """lambda2 sensitivity to dropping each single bank."""

    base_lambda2: float
    lambda2_without: np.ndarray
    deviations_pct: np.ndarray
    max_abs_deviation_pct: float

    def to_json_dict(self) -> dict:
        return {
            "base_lambda2": self.base_lambda2,
            "lambda2_without": [float(v) for v in self.lambda2_without],
            "deviations_pct": [float(v) for v in self.deviations_pct],
            "max_abs_deviation_pct": self.max_abs_deviation_pct,
        }


def leave_one_out_lambda2(assets: Sequence[float] | np.ndarray,
                          cfg: ReconstructionConfig) -> LeaveOneOutResult:
    """Recompute lambda2 with each bank dropped in turn.

    The headline robustness number is the maximum percentage deviation
    over all single-bank drops.
    """
    assets = np.asarray(assets, dtype=float)
    if len(assets) < 4:
        raise InsufficientData("need at least 4 banks")
    base = _lambda2_pipeline(assets, cfg)
    vals = np.empty(len(assets))
    for i in range(len(assets)):
        vals[i] = _lambda2_pipeline(np.delete(assets, i), cfg)
    dev = 100.0 * (vals - base) / base
    return LeaveOneOutResult(base_lambda2=base, lambda2_without=vals,
                             deviations_pct=dev,
                             max_abs_deviation_pct=float(np.abs(dev).max()))
