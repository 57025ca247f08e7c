"""Variance-decomposition networks: VMA inversion, FEVD, degrees, thresholds.

The forecast-error-variance-decomposition weight of edge (i, j) at horizon h
is

    w_ij = 100 * sum_{k=0..h} d_{k,ij}^2 / sum_l sum_{k=0..h} d_{k,il}^2,

so each row sums to 100. The k = 0..h sum counts the contemporaneous impact
plus h lags. Networks keep a zero-diagonal convention for degree and density
computations: self-effects are not edges.
"""
from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError, NumericalError
from .panel import SectorMap
from .sparsevar import SparseVarModel

__all__ = [
    "VmaFilter",
    "FevdMatrix",
    "Network",
    "DegreeReport",
    "ThresholdResult",
    "invert_var",
    "fevd",
    "lgcn",
    "degrees",
    "threshold_lvdn",
    "network_from_fevd",
    "export_network",
    "read_adjacency",
]

THRESHOLD_PERCENTILES = (50, 55, 60, 65, 70, 75, 80, 85, 90, 95, 99)


@dataclass(frozen=True)
class VmaFilter:
    """Truncated moving-average filter D_0..D_h (or B_0..B_h, n x q).

    When built from a Cholesky-identified VAR, rows follow the permuted
    ordering and `permutation` maps permuted positions to original indices.
    """

    coefficients: np.ndarray  # (h+1, n, m)
    horizon: int
    series_labels: tuple[str, ...]
    shock_labels: tuple[str, ...]
    permutation: np.ndarray | None = None
    sectors: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        coefs = np.ascontiguousarray(np.asarray(self.coefficients, dtype=float))
        if coefs.ndim != 3:
            raise DataError(f"expected (h+1, n, m) coefficients, got {coefs.shape}")
        if coefs.shape[0] != self.horizon + 1:
            raise DataError(
                f"{coefs.shape[0]} coefficient matrices for horizon {self.horizon}"
            )
        if not np.all(np.isfinite(coefs)):
            raise DataError("non-finite VMA coefficients")
        object.__setattr__(self, "coefficients", coefs)

    @property
    def n_series(self) -> int:
        return self.coefficients.shape[1]

    @property
    def n_shocks(self) -> int:
        return self.coefficients.shape[2]


@dataclass(frozen=True)
class FevdMatrix:
    """Row-normalized forecast-error variance shares, in percent."""

    weights: np.ndarray  # (n, m), rows sum to 100
    horizon: int
    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]
    permutation: np.ndarray | None = None
    sectors: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        w = np.ascontiguousarray(np.asarray(self.weights, dtype=float))
        if w.ndim != 2:
            raise DataError(f"expected 2-d weights, got shape {w.shape}")
        if np.any(w < -1e-10):
            raise DataError("negative FEVD weights")
        gap = float(np.max(np.abs(w.sum(axis=1) - 100.0)))
        if gap > 1e-8:
            raise DataError(f"FEVD rows must sum to 100 (gap {gap:.3e})")
        object.__setattr__(self, "weights", w)

    @property
    def is_square(self) -> bool:
        return self.weights.shape[0] == self.weights.shape[1]

    def to_original_order(self) -> "FevdMatrix":
        """Undo the identification permutation on rows (and columns if square)."""
        if self.permutation is None:
            return self
        perm = np.asarray(self.permutation)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(perm.size)
        w = self.weights[inv]
        cols = self.col_labels
        if self.is_square:
            w = w[:, inv]
            cols = tuple(np.asarray(self.col_labels, dtype=object)[inv])
        return FevdMatrix(
            weights=w,
            horizon=self.horizon,
            row_labels=tuple(np.asarray(self.row_labels, dtype=object)[inv]),
            col_labels=cols,
            permutation=None,
            sectors=tuple(np.asarray(self.sectors, dtype=object)[inv])
            if self.sectors is not None
            else None,
        )


@dataclass(frozen=True)
class Network:
    """Weighted directed graph over labelled nodes."""

    adjacency: np.ndarray
    labels: tuple[str, ...]
    kind: str  # "LVDN" | "LGCN" | "PCN"
    sectors: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        adj = np.ascontiguousarray(np.asarray(self.adjacency, dtype=float))
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise DataError(f"adjacency must be square, got {adj.shape}")
        if not np.all(np.isfinite(adj)):
            raise DataError("non-finite network weights")
        if self.kind == "PCN":
            gap = float(np.max(np.abs(adj - adj.T)))
            if gap > 1e-8 * max(1.0, float(np.max(np.abs(adj)))):
                raise DataError("PCN adjacency must be symmetric")
        object.__setattr__(self, "adjacency", adj)

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    def edge_density(self) -> float:
        """Share of nonzero off-diagonal entries among the n^2 - n slots."""
        n = self.n_nodes
        off = self.adjacency.copy()
        np.fill_diagonal(off, 0.0)
        return float(np.count_nonzero(off)) / (n * n - n)


@dataclass(frozen=True)
class DegreeReport:
    """From/to degrees with the overall and sectoral connectedness summaries."""

    from_degrees: np.ndarray
    to_degrees: np.ndarray
    total: float
    labels: tuple[str, ...]
    sector_from: dict[str, float] = field(default_factory=dict)
    sector_to: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ThresholdResult:
    """Thresholded FEVD with the objective scan that picked tau."""

    tau: float
    thresholded: np.ndarray
    tau_grid: np.ndarray
    objective_curve: np.ndarray
    density_curve: np.ndarray
    edge_density: float
    objective: str


def invert_var(model: SparseVarModel, chol, horizon: int) -> VmaFilter:
    """Invert a stable sparse VAR into D_0..D_h with D_0 the Cholesky factor.

    The recursion runs in the Cholesky ordering: with the permuted coefficient
    matrices F~, D_0 = R and D_k = sum_{s<=min(k,p)} F~_s D_{k-s}. The
    permutation rides along so reports can be mapped to the original order.
    """
    if horizon < 1:
        raise ConfigError("horizon must be >= 1")
    radius = model.companion_radius()
    if radius >= 1.0:
        raise NumericalError(f"VAR is unstable (companion radius {radius:.4f})")
    n = model.n_series
    R = np.asarray(chol.R, dtype=float)
    if R.shape != (n, n):
        raise DataError(f"Cholesky factor shape {R.shape} does not match n={n}")
    perm = np.asarray(chol.permutation)
    Fp = model.coeffs[:, perm][:, :, perm]  # (p, n, n) in permuted order
    p = Fp.shape[0]
    D = np.empty((horizon + 1, n, n))
    D[0] = R
    for k in range(1, horizon + 1):
        acc = np.zeros((n, n))
        for s in range(1, min(k, p) + 1):
            acc += Fp[s - 1] @ D[k - s]
        D[k] = acc
    labels = tuple(np.asarray(model.labels, dtype=object)[perm])
    sectors = None
    if model.residuals.sectors is not None:
        sectors = tuple(np.asarray(model.residuals.sectors, dtype=object)[perm])
    return VmaFilter(
        coefficients=D,
        horizon=horizon,
        series_labels=labels,
        shock_labels=labels,
        permutation=perm,
        sectors=sectors,
    )


def fevd(vma: VmaFilter) -> FevdMatrix:
    """Forecast-error variance shares from the cumulated squared coefficients."""
    energy = np.einsum("kij,kij->ij", vma.coefficients, vma.coefficients)
    row_sums = energy.sum(axis=1)
    dead = np.nonzero(row_sums <= 0.0)[0]
    if dead.size:
        names = [vma.series_labels[i] for i in dead]
        raise NumericalError(f"all-zero VMA rows make the FEVD undefined: {names}")
    weights = 100.0 * energy / row_sums[:, None]
    return FevdMatrix(
        weights=weights,
        horizon=vma.horizon,
        row_labels=vma.series_labels,
        col_labels=vma.shock_labels,
        permutation=vma.permutation,
        sectors=vma.sectors,
    )


def lgcn(model: SparseVarModel) -> Network:
    """Long-run Granger network: summed lag coefficients as edge weights.

    Entry (i, j) is sum_k F_{k,ij}, the cumulated influence of series j's
    lags in series i's equation. The diagonal is reported but never counted
    as edges.
    """
    return Network(
        adjacency=model.coefficient_sum(),
        labels=model.labels,
        kind="LGCN",
        sectors=model.residuals.sectors,
    )


def network_from_fevd(fevd_matrix: FevdMatrix, kind: str = "LVDN") -> Network:
    """Wrap a square FEVD as a network in original series order."""
    ordered = fevd_matrix.to_original_order()
    if not ordered.is_square:
        raise DataError("only square FEVDs define a network")
    return Network(
        adjacency=ordered.weights,
        labels=ordered.row_labels,
        kind=kind,
        sectors=ordered.sectors,
    )


def degrees(fevd_matrix: FevdMatrix, sectors: SectorMap | None = None) -> DegreeReport:
    """Off-diagonal row sums (from), column sums (to), and their common mean."""
    if not fevd_matrix.is_square:
        raise DataError("degrees need a square FEVD")
    W = fevd_matrix.weights
    diag = np.diag(W)
    from_deg = W.sum(axis=1) - diag
    to_deg = W.sum(axis=0) - diag
    total = float(from_deg.mean())
    sector_from: dict[str, float] = {}
    sector_to: dict[str, float] = {}
    if sectors is not None:
        tags = sectors.for_labels(fevd_matrix.row_labels)
        for sec in sectors.sector_names():
            mask = np.array([t == sec for t in tags])
            if mask.any():
                sector_from[sec] = float(from_deg[mask].mean())
                sector_to[sec] = float(to_deg[mask].mean())
    return DegreeReport(
        from_degrees=from_deg,
        to_degrees=to_deg,
        total=total,
        labels=fevd_matrix.row_labels,
        sector_from=sector_from,
        sector_to=sector_to,
    )


def _inv_sqrt(mat: np.ndarray) -> np.ndarray:
    evals, vecs = np.linalg.eigh(mat)
    floor = max(float(evals.max()), 1e-300) * 1e-12
    evals = np.maximum(evals, floor)
    return (vecs / np.sqrt(evals)) @ vecs.T


def threshold_lvdn(
    fevd_matrix: FevdMatrix,
    percentiles=THRESHOLD_PERCENTILES,
    objective: str = "match-full",
) -> ThresholdResult:
    """Scan sparsifying thresholds over off-diagonal weight percentiles.

    Candidate taus are the stated percentiles of the off-diagonal weights
    plus 0; W_tau zeroes off-diagonal entries below tau. The default
    objective is || N^{-1/2} (W_tau W_tau') N^{-1/2} - I ||_2 with N = W W'
    of the unthresholded matrix; note it vanishes at tau = 0 by construction,
    so the scan curve rather than the argmin carries the information. The
    "decorrelate" objective instead normalizes W_tau W_tau' by its own
    diagonal and measures distance from the identity.
    """
    if not fevd_matrix.is_square:
        raise DataError("thresholding needs a square FEVD")
    if objective not in ("match-full", "decorrelate"):
        raise ConfigError(f"unknown threshold objective {objective!r}")
    W = fevd_matrix.weights
    n = W.shape[0]
    off_mask = ~np.eye(n, dtype=bool)
    off_values = W[off_mask]
    taus = np.concatenate([[0.0], np.percentile(off_values, list(percentiles))])
    taus = np.unique(taus)

    if objective == "match-full":
        N_inv_sqrt = _inv_sqrt(W @ W.T)
    curve = np.empty(taus.size)
    density = np.empty(taus.size)
    best_idx = 0
    thresholded_at_best = W.copy()
    for t_idx, tau in enumerate(taus):
        Wt = W.copy()
        kill = off_mask & (Wt < tau)
        Wt[kill] = 0.0
        product = Wt @ Wt.T
        if objective == "match-full":
            mid = N_inv_sqrt @ product @ N_inv_sqrt - np.eye(n)
        else:
            d = np.sqrt(np.maximum(np.diag(product), 1e-300))
            mid = product / np.outer(d, d) - np.eye(n)
        curve[t_idx] = float(np.max(np.abs(np.linalg.eigvalsh((mid + mid.T) / 2.0))))
        off = Wt[off_mask]
        density[t_idx] = float(np.count_nonzero(off)) / off.size
        if curve[t_idx] < curve[best_idx]:
            best_idx = t_idx
            thresholded_at_best = Wt
    return ThresholdResult(
        tau=float(taus[best_idx]),
        thresholded=thresholded_at_best,
        tau_grid=taus,
        objective_curve=curve,
        density_curve=density,
        edge_density=float(density[best_idx]),
        objective=objective,
    )


def export_network(network: Network, path: str | Path, fmt: str = "edges") -> Path:
    """Write a network as an edge list, dense adjacency, or GEXF XML."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if fmt == "edges":
            _write_edges(network, path)
        elif fmt == "adjacency":
            _write_adjacency(network, path)
        elif fmt == "gexf":
            _write_gexf(network, path)
        else:
            raise ConfigError(f"unknown export format {fmt!r}")
    except OSError as exc:
        raise DataError(f"cannot write network to {path}: {exc}") from exc
    return path


def _write_edges(network: Network, path: Path) -> None:
    adj = network.adjacency
    lines = ["source,target,weight"]
    n = network.n_nodes
    for i in range(n):
        for j in range(n):
            if i != j and adj[i, j] != 0.0:
                lines.append(
                    f"{network.labels[i]},{network.labels[j]},{adj[i, j]:.17g}"
                )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_adjacency(network: Network, path: Path) -> None:
    frame = pd.DataFrame(
        network.adjacency, index=list(network.labels), columns=list(network.labels)
    )
    frame.to_csv(path, float_format="%.17g", index_label="label")


def read_adjacency(path: str | Path, kind: str = "LVDN") -> Network:
    """Read a dense adjacency export back into a Network."""
    frame = pd.read_csv(path, index_col=0, float_precision="round_trip")
    if list(frame.index) != list(frame.columns):
        raise DataError("adjacency file rows and columns disagree")
    return Network(
        adjacency=frame.to_numpy(dtype=float),
        labels=tuple(str(c) for c in frame.columns),
        kind=kind,
    )


def _write_gexf(network: Network, path: Path) -> None:
    adj = network.adjacency
    diag = np.diag(adj)
    from_deg = adj.sum(axis=1) - diag
    to_deg = adj.sum(axis=0) - diag
    root = ET.Element("gexf", xmlns="http://www.gexf.net/1.2draft", version="1.2")
    graph = ET.SubElement(root, "graph", defaultedgetype="directed")
    attrs = ET.SubElement(graph, "attributes", {"class": "node"})
    for aid, (title, typ) in enumerate(
        [("sector", "string"), ("from_degree", "double"), ("to_degree", "double")]
    ):
        ET.SubElement(attrs, "attribute", id=str(aid), title=title, type=typ)
    nodes = ET.SubElement(graph, "nodes")
    for i, label in enumerate(network.labels):
        node = ET.SubElement(nodes, "node", id=str(i), label=label)
        values = ET.SubElement(node, "attvalues")
        sector = network.sectors[i] if network.sectors is not None else ""
        ET.SubElement(values, "attvalue", {"for": "0", "value": sector})
        ET.SubElement(values, "attvalue", {"for": "1", "value": f"{from_deg[i]:.17g}"})
        ET.SubElement(values, "attvalue", {"for": "2", "value": f"{to_deg[i]:.17g}"})
    edges = ET.SubElement(graph, "edges")
    eid = 0
    for i in range(network.n_nodes):
        for j in range(network.n_nodes):
            if i != j and adj[i, j] != 0.0:
                ET.SubElement(
                    edges,
                    "edge",
                    id=str(eid),
                    source=str(i),
                    target=str(j),
                    weight=f"{adj[i, j]:.17g}",
                )
                eid += 1
    tree = ET.ElementTree(root)
    ET.indent(tree)
    tree.write(path, encoding="utf-8", xml_declaration=True)
