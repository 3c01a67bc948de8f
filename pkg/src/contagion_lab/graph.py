"""Weighted-graph construction, Laplacian spectra, and topology metrics.

The Laplacian is L = D - W with D the diagonal weighted-degree matrix.
Dense symmetric eigendecomposition is used up to ``DENSE_CUTOFF`` nodes;
beyond that an iterative Lanczos-type solver (ARPACK shift-invert)
extracts the smallest eigenpairs. Algebraic connectivity is always
reported for the largest connected component.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import eigsh

from .errors import DegenerateVector, NonPositiveLambda2, SingletonGraph, TooSmall
from .reconstruct import ExposureMatrix

DENSE_CUTOFF = 100
#: Eigenvalues below ZERO_TOL * max(1, lambda_n) count as zero.
ZERO_TOL = 1e-6


@dataclass(frozen=True)
class WeightedNetwork:
    """Symmetric weighted graph with zero diagonal."""

    bank_ids: tuple[str, ...]
    W: np.ndarray

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        n = len(self.bank_ids)
        if W.shape != (n, n):
            raise ValueError(f"W must be {n}x{n}, got {W.shape}")
        if np.any(W < 0) or not np.all(np.isfinite(W)):
            raise ValueError("weights must be finite and non-negative")
        if not np.array_equal(W, W.T):
            raise ValueError("W must be exactly symmetric")
        if np.any(np.diagonal(W) != 0.0):
            raise ValueError("diagonal must be zero")
        object.__setattr__(self, "W", W)

    @property
    def n(self) -> int:
        return len(self.bank_ids)

    def weighted_degrees(self) -> np.ndarray:
        return self.W.sum(axis=1)

    def laplacian(self) -> np.ndarray:
        return np.diag(self.weighted_degrees()) - self.W

    def components(self) -> list[np.ndarray]:
        """Connected components as index arrays, largest first."""
        n_comp, labels = connected_components(sp.csr_matrix(self.W > 0),
                                              directed=False)
        comps = [np.flatnonzero(labels == k) for k in range(n_comp)]
        comps.sort(key=len, reverse=True)
        return comps

    def subnetwork(self, idx: np.ndarray) -> "WeightedNetwork":
        ids = tuple(self.bank_ids[i] for i in idx)
        return WeightedNetwork(bank_ids=ids, W=self.W[np.ix_(idx, idx)])

    def edges(self) -> list[tuple[int, int, float]]:
        """Undirected positive-weight edges (i < j)."""
        iu, ju = np.triu_indices(self.n, k=1)
        mask = self.W[iu, ju] > 0
        return [(int(i), int(j), float(self.W[i, j]))
                for i, j in zip(iu[mask], ju[mask])]


def build_network(exposures: ExposureMatrix, epsilon: float = 0.0) -> WeightedNetwork:
    """Symmetrize exposures into edge weights w_ij = x_ij + x_ji.

    Pairs whose symmetric sum is <= epsilon get no edge.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    W = exposures.X + exposures.X.T
    W[W <= epsilon] = 0.0
    np.fill_diagonal(W, 0.0)
    return WeightedNetwork(bank_ids=exposures.bank_ids, W=W)


@dataclass(frozen=True)
class SpectrumResult:
    """Laplacian eigenvalues plus the Fiedler pair of the largest component.

    ``eigenvalues`` covers the full graph when ``complete`` is True (dense
    path); the iterative path stores only the smallest computed values.
    The Fiedler vector is embedded in full length with zeros off the
    largest component and its first nonzero entry oriented positive.
    """

    bank_ids: tuple[str, ...]
    eigenvalues: np.ndarray
    fiedler_vector: np.ndarray
    component_sizes: tuple[int, ...]
    lambda2: float
    lambda_n: float
    component_mask: np.ndarray
    complete: bool = True
    method: str = "dense"

    def n_components(self) -> int:
        return len(self.component_sizes)

    def to_json_dict(self) -> dict:
        return {
            "bank_ids": list(self.bank_ids),
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "fiedler_vector": [float(v) for v in self.fiedler_vector],
            "component_sizes": list(self.component_sizes),
            "lambda2": float(self.lambda2),
            "lambda_n": float(self.lambda_n),
            "complete": self.complete,
            "method": self.method,
        }


def _orient(v: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Flip sign so the first entry exceeding tol in magnitude is positive."""
    for x in v:
        if abs(x) > tol:
            return v if x > 0 else -v
    return v


def _lanczos_pair(L: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Smallest k eigenpairs and lambda_n via ARPACK with deterministic start.

    Shift-invert with a small negative sigma keeps L - sigma*I positive
    definite despite the zero eigenvalue.
    """
    n = L.shape[0]
    Ls = sp.csr_matrix(L)
    scale = max(1.0, float(np.max(np.diagonal(L))))
    # fixed start vector: deterministic and not in the Laplacian null space
    v0 = np.cos(np.arange(n, dtype=float) + 0.5)
    v0 /= np.linalg.norm(v0)
    k = min(k, n - 1)
    vals, vecs = eigsh(Ls, k=k, sigma=-1e-3 * scale, which="LM", v0=v0)
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    top = eigsh(Ls, k=1, which="LA", v0=v0, return_eigenvectors=False)
    return vals, vecs, float(top[0])


def laplacian_spectrum(net: WeightedNetwork, method: str = "auto",
                       dense_cutoff: int = DENSE_CUTOFF) -> SpectrumResult:
    """Eigendecomposition of the Laplacian with component bookkeeping.

    ``method`` is "auto" (dense up to ``dense_cutoff`` nodes, Lanczos
    beyond), "dense", or "lanczos". lambda2 and the Fiedler vector are
    computed on the largest connected component; SingletonGraph is raised
    if that component has fewer than 2 nodes.
    """
    if net.n < 2:
        raise SingletonGraph("need at least 2 nodes")
    comps = net.components()
    sizes = tuple(len(c) for c in comps)
    if sizes[0] < 2:
        raise SingletonGraph("largest component has fewer than 2 nodes")
    main = comps[0]
    mask = np.zeros(net.n, dtype=bool)
    mask[main] = True

    if method == "auto":
        method = "dense" if net.n <= dense_cutoff else "lanczos"

    if method == "dense":
        L = net.laplacian()
        eigenvalues = np.linalg.eigvalsh(L)
        L_main = net.subnetwork(main).laplacian()
        vals, vecs = np.linalg.eigh(L_main)
        lambda2 = float(vals[1])
        q2_main = vecs[:, 1]
        lambda_n = float(eigenvalues[-1])
        complete = True
    elif method == "lanczos":
        sub = net.subnetwork(main)
        if len(main) < 8:
            # too small for ARPACK's k < n constraint to pay off
            vals, vecs = np.linalg.eigh(sub.laplacian())
            lambda_n_main = float(vals[-1])
        else:
            vals, vecs, lambda_n_main = _lanczos_pair(
                sub.laplacian(), k=min(6, len(main) - 2))
        lambda2 = float(vals[1])
        q2_main = vecs[:, 1]
        # smallest eigenvalues of the full graph: zeros per extra component
        eigenvalues = np.sort(np.concatenate([np.zeros(len(comps) - 1), vals]))
        lambda_n = lambda_n_main
        complete = False
    else:
        raise ValueError(f"unknown method {method!r}")

    # project out any residual uniform contamination, then normalize
    q2_main = q2_main - q2_main.mean()
    q2_main /= np.linalg.norm(q2_main)
    fiedler = np.zeros(net.n)
    fiedler[main] = q2_main
    fiedler = _orient(fiedler)
    return SpectrumResult(
        bank_ids=net.bank_ids,
        eigenvalues=eigenvalues,
        fiedler_vector=fiedler,
        component_sizes=sizes,
        lambda2=lambda2,
        lambda_n=lambda_n,
        component_mask=mask,
        complete=complete,
        method=method,
    )


def count_zero_eigenvalues(spectrum: SpectrumResult) -> int:
    """Eigenvalues below the connectivity tolerance (dense path only)."""
    tol = ZERO_TOL * max(1.0, spectrum.lambda_n)
    return int(np.sum(np.abs(spectrum.eigenvalues) < tol))


def eigenvalues_csv_text(spectrum: SpectrumResult) -> str:
    """Plot-ready CSV of the sorted spectrum (index, eigenvalue)."""
    lines = ["index,eigenvalue"]
    for i, v in enumerate(spectrum.eigenvalues, start=1):
        lines.append(f"{i},{float(v)!r}")
    return "\n".join(lines) + "\n"


def algebraic_connectivity(net: WeightedNetwork, method: str = "auto") -> float:
    return laplacian_spectrum(net, method=method).lambda2


def fiedler_partition(spectrum: SpectrumResult) -> tuple[set, set]:
    """Bipartition the largest component by the sign of the Fiedler vector.

    Entries within roundoff of zero go to the positive side; nodes off the
    largest component belong to neither set.
    """
    if not spectrum.lambda2 > 0:
        raise NonPositiveLambda2("lambda2 must be > 0 for a meaningful partition")
    q2 = spectrum.fiedler_vector
    mask = spectrum.component_mask
    tol = 1e-12 * max(1.0, float(np.abs(q2).max()))
    pos = {spectrum.bank_ids[i] for i in range(len(q2)) if mask[i] and q2[i] >= -tol}
    neg = {spectrum.bank_ids[i] for i in range(len(q2)) if mask[i] and q2[i] < -tol}
    if not pos or not neg:
        raise DegenerateVector(
            "Fiedler vector has a single sign; eigensolver output is invalid"
        )
    return pos, neg


def degree_sequence(net: WeightedNetwork, weighted: bool = True) -> np.ndarray:
    """Weighted degree sums or unweighted counts of positive entries."""
    if weighted:
        return net.weighted_degrees()
    return (net.W > 0).sum(axis=1).astype(float)


def gini_coefficient(values: np.ndarray) -> float:
    """Gini of a non-negative sequence via the sorted-rank formula."""
    x = np.sort(np.asarray(values, dtype=float), kind="stable")
    n = len(x)
    total = x.sum()
    if n == 0 or total <= 0:
        return 0.0
    ranks = np.arange(1, n + 1)
    return float(((2 * ranks - n - 1) * x).sum() / (n * total))


def hhi(values: np.ndarray) -> float:
    shares = values / values.sum()
    return float((shares ** 2).sum())


def top_k_share(values: np.ndarray, k: int) -> float:
    x = np.sort(values)[::-1]
    return float(x[:k].sum() / x.sum())


@dataclass(frozen=True)
class TopologyReport:
    """Concentration, spectral, and centralization summary of one network."""

    n: int
    gini: float
    hhi: float
    top_k_share: dict[int, float]
    cr3: float
    assortativity: float
    assortativity_defined: bool
    spectral_radius: float
    lambda_n: float
    spectral_gap: float
    effective_resistance: float
    weighted_avg_degree: float
    centralization: dict[str, float]

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "gini": self.gini,
            "hhi": self.hhi,
            "top_k_share": {str(k): v for k, v in self.top_k_share.items()},
            "cr3": self.cr3,
            "assortativity": None if not self.assortativity_defined else self.assortativity,
            "assortativity_defined": self.assortativity_defined,
            "spectral_radius": self.spectral_radius,
            "lambda_n": self.lambda_n,
            "spectral_gap": self.spectral_gap,
            "effective_resistance": self.effective_resistance,
            "weighted_avg_degree": self.weighted_avg_degree,
            "centralization": dict(self.centralization),
        }


def weighted_degree_assortativity(net: WeightedNetwork) -> tuple[float, bool]:
    """Pearson correlation of endpoint weighted degrees across edges.

    Each undirected edge contributes both orientations. Returns
    (value, defined); undefined when endpoint degrees have no variance.
    """
    d = net.weighted_degrees()
    edges = net.edges()
    if not edges:
        return math.nan, False
    xs, ys = [], []
    for i, j, _ in edges:
        xs.extend((d[i], d[j]))
        ys.extend((d[j], d[i]))
    x = np.asarray(xs)
    y = np.asarray(ys)
    if np.std(x) == 0 or np.std(y) == 0:
        return math.nan, False
    return float(np.corrcoef(x, y)[0, 1]), True


def _betweenness(net: WeightedNetwork) -> np.ndarray:
    """Normalized betweenness with edge lengths 1/w (networkx Brandes)."""
    import networkx as nx

    G = nx.Graph()
    G.add_nodes_from(range(net.n))
    for i, j, w in net.edges():
        G.add_edge(i, j, length=1.0 / w)
    bc = nx.betweenness_centrality(G, weight="length", normalized=True)
    return np.array([bc[i] for i in range(net.n)])


def _eigenvector_centrality(W: np.ndarray) -> np.ndarray:
    """Principal eigenvector of the weighted adjacency, unit 2-norm, >= 0."""
    vals, vecs = np.linalg.eigh(W)
    v = vecs[:, -1]
    if v.sum() < 0:
        v = -v
    return np.clip(v, 0.0, None) / np.linalg.norm(np.clip(v, 0.0, None))


def _freeman(values: np.ndarray, max_sum: float) -> float:
    if max_sum <= 0:
        return 0.0
    return float((values.max() - values).sum() / max_sum)


def topology_report(net: WeightedNetwork, ks: Sequence[int] = (3, 5, 10)) -> TopologyReport:
    """All topology metrics, computed on the largest connected component.

    Betweenness uses weighted shortest paths with length 1/w; the
    centralization entries are Freeman centralizations against the star of
    the same size. Raises TooSmall below 3 nodes.
    """
    comps = net.components()
    sub = net.subnetwork(comps[0])
    m = sub.n
    if m < 3:
        raise TooSmall("largest component must have >= 3 nodes")

    d = sub.weighted_degrees()
    shares = {k: top_k_share(d, k) for k in ks if k <= m}
    cr3 = top_k_share(d, 3)

    L = sub.laplacian()
    lap_vals = np.linalg.eigvalsh(L)
    lambda2 = float(lap_vals[1])
    lambda_n = float(lap_vals[-1])
    # n * sum of reciprocal nonzero eigenvalues, not the per-pair Kirchhoff form
    effective_resistance = float(m * np.sum(1.0 / lap_vals[1:]))
    adj_vals = np.linalg.eigvalsh(sub.W)
    spectral_radius = float(np.abs(adj_vals).max())

    assort, assort_def = weighted_degree_assortativity(sub)

    deg_unweighted = (sub.W > 0).sum(axis=1).astype(float)
    bc = _betweenness(sub)
    ec = _eigenvector_centrality(sub.W)
    star_ec_center = 1.0 / math.sqrt(2.0)
    star_ec_leaf = 1.0 / math.sqrt(2.0 * (m - 1))
    centralization = {
        "degree": _freeman(deg_unweighted, (m - 1) * (m - 2)),
        "betweenness": _freeman(bc, m - 1),
        "eigenvector": _freeman(ec, (m - 1) * (star_ec_center - star_ec_leaf)),
    }

    return TopologyReport(
        n=m,
        gini=gini_coefficient(d),
        hhi=hhi(d),
        top_k_share=shares,
        cr3=cr3,
        assortativity=assort,
        assortativity_defined=assort_def,
        spectral_radius=spectral_radius,
        lambda_n=lambda_n,
        spectral_gap=lambda2,
        effective_resistance=effective_resistance,
        weighted_avg_degree=float(d.mean()),
        centralization=centralization,
    )
