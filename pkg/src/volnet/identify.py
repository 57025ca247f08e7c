"""Shock identification: partial correlation network, centrality, Cholesky.

The partial correlation between two innovation series is recovered from the
node-wise regressions of each series on all others: with slopes beta_ij and
beta_ji estimated by lasso, rho_ij = sign(beta_ij) * sqrt(beta_ij * beta_ji)
whenever both slopes are nonzero with matching signs (the conservative AND
rule), and 0 otherwise. Shocks are then ordered by eigenvector centrality in
that network, most central first, and the orthogonalizing factor is the
Cholesky factor of the reordered residual covariance.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import _cd
from .errors import ConfigError, DataError, NumericalError
from .panel import TimePanel

__all__ = [
    "Pcn",
    "CentralityRanking",
    "CholeskiFactor",
    "estimate_pcn",
    "eigenvector_centrality",
    "order_and_choleski",
]

_POWER_TOL = 1e-10
_POWER_MAX_ITER = 10_000


@dataclass(frozen=True)
class Pcn:
    """Symmetric partial-correlation weights with zero diagonal."""

    weights: np.ndarray
    labels: tuple[str, ...]
    node_lambdas: np.ndarray
    dropped: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        w = np.ascontiguousarray(np.asarray(self.weights, dtype=float))
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise DataError(f"PCN weights must be square, got {w.shape}")
        if float(np.max(np.abs(w - w.T))) > 1e-12:
            raise DataError("PCN weights must be symmetric")
        if float(np.max(np.abs(np.diag(w)))) != 0.0:
            raise DataError("PCN diagonal must be zero")
        if float(np.max(np.abs(w))) > 1.0 + 1e-8:
            raise DataError("partial correlations must lie in [-1, 1]")
        object.__setattr__(self, "weights", w)

    @property
    def n_nodes(self) -> int:
        return self.weights.shape[0]

    def edge_density(self) -> float:
        n = self.n_nodes
        return float(np.count_nonzero(self.weights)) / (n * n - n)


@dataclass(frozen=True)
class CentralityRanking:
    """Node scores and the most-central-first ordering."""

    scores: np.ndarray  # ranking scores (absolute values in signed mode)
    order: np.ndarray  # permutation of 0..n-1, most central first
    mode: str
    eigenvector: np.ndarray  # raw leading eigenvector (signed in signed mode)

    @property
    def n_nodes(self) -> int:
        return self.scores.size


@dataclass(frozen=True)
class CholeskiFactor:
    """Lower-triangular factor of the reordered residual covariance."""

    R: np.ndarray
    permutation: np.ndarray  # permuted position -> original series index
    labels: tuple[str, ...]  # labels in permuted order
    regularized: bool = False


def _node_lasso(G: np.ndarray, b: np.ndarray, t_eff: int, grid_size: int):
    """Lasso path + BIC for one node-wise regression; returns (coefs, lam)."""
    s = np.sqrt(np.diag(G).copy())
    s[s <= 0.0] = 1.0
    Gs = G / np.outer(s, s)
    bs = b / s
    lam_max = max(float(np.max(np.abs(b))), 1e-12)
    lams = np.geomspace(lam_max, 1e-3 * lam_max, grid_size)
    l1w = 1.0 / s
    rw = np.zeros_like(b)
    path, _, conv, _ = _cd.enet_path(Gs, bs, lams, l1w, rw, 10_000, 1e-7, False)
    if not np.all(conv):
        warnings.warn("node-wise lasso hit the sweep cap")
    path = path / s
    return path, lams


def estimate_pcn(residuals: TimePanel, lambda_grid_size: int = 10) -> Pcn:
    """Node-wise lasso estimate of the partial correlation network.

    Each residual series is regressed on all others with the penalty level
    chosen per node by BIC. Series with degenerate variance are dropped from
    the network (zero rows) and reported in the result.
    """
    X = residuals.values - residuals.values.mean(axis=1, keepdims=True)
    n, T = X.shape
    variances = np.einsum("it,it->i", X, X) / T
    alive = variances > 1e-14 * max(float(variances.max()), 1e-300)
    dropped = tuple(residuals.labels[i] for i in np.nonzero(~alive)[0])
    if dropped:
        warnings.warn(f"dropping degenerate residual series from the PCN: {dropped}")

    Gfull = X @ X.T / T
    betas = np.zeros((n, n))
    lambdas = np.zeros(n)
    live_idx = np.nonzero(alive)[0]
    for i in live_idx:
        others = live_idx[live_idx != i]
        if others.size == 0:
            continue
        G = Gfull[np.ix_(others, others)]
        b = Gfull[others, i]
        path, lams = _node_lasso(G, b, T, lambda_grid_size)
        rss = T * np.maximum(
            variances[i] - 2.0 * path @ b + np.einsum("lj,jk,lk->l", path, G, path),
            1e-300,
        )
        k = np.count_nonzero(path, axis=1)
        bic = T * np.log(rss / T) + k * np.log(T)
        best = int(bic.argmin())
        betas[i, others] = path[best]
        lambdas[i] = lams[best]

    same_sign = (betas * betas.T) > 0.0
    rho = np.zeros((n, n))
    rho[same_sign] = np.sign(betas[same_sign]) * np.sqrt(
        betas[same_sign] * betas.T[same_sign]
    )
    rho = np.clip((rho + rho.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(rho, 0.0)
    return Pcn(
        weights=rho,
        labels=residuals.labels,
        node_lambdas=lambdas,
        dropped=dropped,
    )


def _power_iteration(A: np.ndarray) -> np.ndarray | None:
    """Leading eigenvector by power iteration; None if it fails to settle."""
    n = A.shape[0]
    v = np.full(n, 1.0 / n)
    for _ in range(_POWER_MAX_ITER):
        w = A @ v
        norm = float(np.abs(w).sum())
        if norm <= 0.0:
            return None
        w /= norm
        # Leading eigenvalues of signed matrices can be negative; compare
        # against both orientations.
        if min(float(np.abs(w - v).max()), float(np.abs(w + v).max())) < _POWER_TOL:
            return w
        v = w
    return None


def _leading_eigenvector(A: np.ndarray) -> np.ndarray:
    v = _power_iteration(A)
    if v is None:
        evals, evecs = np.linalg.eig(A)
        lead = int(np.argmax(np.abs(evals)))
        vec = evecs[:, lead]
        if np.abs(vec.imag).max() > 1e-8 * max(np.abs(vec.real).max(), 1e-300):
            warnings.warn("complex leading eigenvector; ranking by modulus")
            vec = np.abs(vec).astype(float)
        else:
            vec = vec.real
        v = vec
    total = float(np.abs(v).sum())
    if total <= 0.0:
        raise NumericalError("degenerate leading eigenvector")
    v = v / total
    pivot = int(np.abs(v).argmax())
    if v[pivot] < 0.0:
        v = -v
    return v


def eigenvector_centrality(
    weights: np.ndarray,
    mode: str = "unsigned",
    directed: bool = False,
    use_left: bool = True,
) -> CentralityRanking:
    """Eigenvector centrality of a weighted network.

    Unsigned mode works on entrywise absolute weights; signed mode keeps the
    weights and ranks by the magnitude of the leading-eigenvector entries.
    For directed networks the default scores are the left leading eigenvector
    (with W[i, j] read as the effect of j on i, as in a FEVD matrix, this
    measures strength as a shock source); use_left=False switches to the
    right eigenvector. Ties in the ranking break toward the original index.
    """
    W = np.asarray(weights, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise DataError(f"weights must be square, got {W.shape}")
    if not W.any():
        raise DataError("cannot rank an all-zero network")
    if mode not in ("unsigned", "signed"):
        raise ConfigError(f"unknown centrality mode {mode!r}")
    M = np.abs(W) if mode == "unsigned" else W
    if directed and use_left:
        M = M.T
    vec = _leading_eigenvector(M)
    scores = vec if mode == "unsigned" else np.abs(vec)
    if mode == "unsigned":
        scores = np.where(np.abs(scores) < 1e-15, 0.0, scores)
        if scores.min() < 0.0:
            # reducible networks can leak tiny mixed signs; rank magnitudes
            scores = np.abs(scores)
    order = np.lexsort((np.arange(scores.size), -scores))
    return CentralityRanking(scores=scores, order=order, mode=mode, eigenvector=vec)


def order_and_choleski(residuals: TimePanel, ranking: CentralityRanking) -> CholeskiFactor:
    """Cholesky factor of the residual covariance in centrality order.

    Residual series are permuted most central first; the factor R satisfies
    R R' = covariance of the permuted residuals. A tiny ridge is added (and
    flagged) when the covariance is not numerically positive definite.
    """
    n = residuals.n_series
    perm = np.asarray(ranking.order)
    if sorted(perm.tolist()) != list(range(n)):
        raise DataError("ranking does not permute the residual series")
    X = residuals.values[perm]
    Xc = X - X.mean(axis=1, keepdims=True)
    S = Xc @ Xc.T / X.shape[1]
    S = (S + S.T) / 2.0
    regularized = False
    try:
        R = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        ridge = 1e-10 * np.trace(S) / n
        regularized = True
        try:
            R = np.linalg.cholesky(S + ridge * np.eye(n))
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"residual covariance not positive definite: {exc}") from exc
    labels = tuple(np.asarray(residuals.labels, dtype=object)[perm])
    return CholeskiFactor(R=R, permutation=perm, labels=labels, regularized=regularized)
