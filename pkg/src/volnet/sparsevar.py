"""Penalized sparse VAR estimation, row by row.

Each equation i of the VAR(p)

    Z_t = F_1 Z_{t-1} + ... + F_p Z_{t-p} + v_t

is fit independently by minimizing

    (1/(2T)) * sum_t (Z_it - f_i' x_t)^2 + Penalty(f_i)

over the lag-major regressor vector x_t = (Z_{1,t-1}..Z_{n,t-1}, ...,
Z_{1,t-p}..Z_{n,t-p}). Penalties: elastic net
lam*(alpha*||f||_1 + (1-alpha)*||f||_2^2), adaptive lasso with
per-coefficient weights from a ridge pre-estimator, and the lag-group
penalty lam*sqrt(p)*sum_j ||(f_1j..f_pj)||_2. Coordinate descent runs on
the standardized design; coefficients are reported on the original scale.
"""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _cd
from .errors import ConfigError, DataError, NumericalError
from .panel import TimePanel

__all__ = [
    "PenaltySpec",
    "SparseVarModel",
    "BicSelection",
    "fit_penalized_row",
    "select_bic",
    "fit_sparse_var",
    "kkt_violation",
]

PENALTY_METHODS = ("elastic-net", "adaptive-lasso", "group-lasso")

_MAX_SWEEPS = 10_000
_TOL = 1e-7
_WEIGHT_FLOOR = 1e-6
_LAMBDA_SPAN = 1e-3


@dataclass(frozen=True)
class PenaltySpec:
    """Penalty family and tuning constants for one fit.

    alpha is the elastic-net l1 fraction; pre_ridge is the adaptive-lasso
    pre-estimator ridge strength relative to the mean Gram diagonal
    (None lets generalized cross-validation pick it from a coarse grid).
    """

    method: str = "elastic-net"
    strength: float = 0.0
    alpha: float = 0.5
    pre_ridge: float | None = None

    def __post_init__(self) -> None:
        if self.method not in PENALTY_METHODS:
            raise ConfigError(f"unknown penalty method {self.method!r}")
        if self.strength < 0.0:
            raise ConfigError("penalty strength must be >= 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must be in [0, 1]")
        if self.pre_ridge is not None and self.pre_ridge <= 0.0:
            raise ConfigError("pre_ridge must be positive")


@dataclass
class BicSelection:
    """Per-row BIC surfaces over the (p, lambda) grid and the selected pair.

    lambda grids are per row (anchored at each row's own lambda_max), stored
    descending. The selected order is the modal per-row best p; each row then
    keeps its own lambda at that order, so the grid-minimum property holds
    row by row. Ties break toward smaller p, then larger lambda.
    """

    p_grid: tuple[int, ...]
    lambda_grids: dict[int, np.ndarray]  # p -> (n, L) descending grids
    bic: dict[int, np.ndarray]  # p -> (n, L)
    row_best_p: np.ndarray  # (n,)
    selected_p: int
    row_lambda_index: np.ndarray  # (n,) index into the selected-p grid
    coefs: dict[int, np.ndarray] = field(repr=False, default_factory=dict)

    @property
    def selected_lambdas(self) -> np.ndarray:
        grid = self.lambda_grids[self.selected_p]
        return grid[np.arange(grid.shape[0]), self.row_lambda_index]

    @property
    def selected(self) -> tuple[int, float]:
        """(selected order, median of the per-row selected lambdas)."""
        return self.selected_p, float(np.median(self.selected_lambdas))


@dataclass
class SparseVarModel:
    """A fitted sparse VAR(p) with residual second-moment summaries."""

    order: int
    coeffs: np.ndarray  # (p, n, n); entry (k, i, j) multiplies Z_{j, t-k-1}
    residuals: TimePanel
    residual_cov: np.ndarray
    residual_precision: np.ndarray
    row_lambdas: np.ndarray
    penalty: PenaltySpec
    labels: tuple[str, ...]
    selection: BicSelection | None = None
    flags: list[str] = field(default_factory=list)

    @property
    def n_series(self) -> int:
        return self.coeffs.shape[1]

    def companion_radius(self) -> float:
        return companion_spectral_radius(self.coeffs)

    def is_stable(self) -> bool:
        return self.companion_radius() < 1.0

    def coefficient_sum(self) -> np.ndarray:
        """Sum of the lag coefficient matrices (long-run response summary)."""
        return self.coeffs.sum(axis=0)

    def nonzero_count(self) -> int:
        return int(np.count_nonzero(self.coeffs))

    def to_triplets(self) -> np.ndarray:
        """Sparse export rows (row, col, lag, value) for nonzero coefficients."""
        lags, rows, cols = np.nonzero(self.coeffs)
        vals = self.coeffs[lags, rows, cols]
        return np.column_stack([rows, cols, lags + 1, vals])


def companion_spectral_radius(coeffs: np.ndarray) -> float:
    """Spectral radius of the companion matrix of (p, n, n) VAR coefficients."""
    p, n, _ = coeffs.shape
    if p == 0 or not coeffs.any():
        return 0.0
    comp = np.zeros((n * p, n * p))
    comp[:n] = coeffs.transpose(1, 0, 2).reshape(n, n * p)
    if p > 1:
        comp[n:, :-n] = np.eye(n * (p - 1))
    return float(np.max(np.abs(np.linalg.eigvals(comp))))


def _lagged_gram(values: np.ndarray, order: int):
    """Gram summaries of the lag-major VAR design.

    Returns (G, B, yss, t_eff) with G = X'X/T_eff (np x np), B = X'Y/T_eff
    (np x n, one response column per series) and yss the mean squared
    responses.
    """
    n, T = values.shape
    if order < 1:
        raise DataError("VAR order must be >= 1")
    if T <= order + 1:
        raise DataError(f"sample size {T} too small for order {order}")
    t_eff = T - order
    X = np.empty((n * order, t_eff))
    for k in range(1, order + 1):
        X[(k - 1) * n : k * n] = values[:, order - k : T - k]
    Y = values[:, order:]
    G = X @ X.T / t_eff
    B = X @ Y.T / t_eff
    yss = np.einsum("it,it->i", Y, Y) / t_eff
    return G, B, yss, t_eff


def _standardize(G: np.ndarray, b: np.ndarray):
    s = np.sqrt(np.diag(G).copy())
    s[s <= 0.0] = 1.0
    Gs = G / np.outer(s, s)
    bs = b / s
    return Gs, bs, s


def _adaptive_weights(pre: np.ndarray) -> np.ndarray:
    return 1.0 / np.maximum(np.abs(pre), _WEIGHT_FLOOR)


def _pre_estimator(G: np.ndarray, B: np.ndarray, yss: np.ndarray, t_eff: int,
                   pre_ridge: float | None) -> np.ndarray:
    """Ridge pre-estimates for every response column (adaptive lasso)."""
    scale = max(float(np.mean(np.diag(G))), 1e-300)
    if pre_ridge is not None:
        kappas = np.array([pre_ridge * scale])
    else:
        kappas = np.array([1e-4, 1e-3, 1e-2, 1e-1, 1.0]) * scale
    coefs, _ = _cd.ridge_gcv_path(G, B, yss, t_eff, kappas)
    return coefs


def _lambda_max(b: np.ndarray, penalty: PenaltySpec, weights: np.ndarray | None,
                order: int, n_series: int) -> float:
    if penalty.method == "group-lasso":
        bg = b.reshape(order, n_series)
        return float(np.max(np.linalg.norm(bg, axis=0))) / np.sqrt(order)
    alpha = penalty.alpha if penalty.method == "elastic-net" else 1.0
    alpha = max(alpha, 1e-3)
    w = weights if weights is not None else np.ones_like(b)
    return float(np.max(np.abs(b) / (alpha * w)))


def _lambda_grid(lam_max: float, size: int) -> np.ndarray:
    lam_max = max(lam_max, 1e-12)
    if size == 1:
        return np.array([lam_max])
    return np.geomspace(lam_max, _LAMBDA_SPAN * lam_max, size)


def _solve_row_path(G, b, lams, penalty: PenaltySpec, weights, order, n_series,
                    record_objective=False):
    """Path solutions (original scale) for one row at descending lambdas."""
    if penalty.method == "group-lasso":
        coefs, sweeps, conv, obj = _cd.group_path(
            G, b, np.asarray(lams, dtype=float), n_series, order,
            _MAX_SWEEPS, _TOL, record_objective,
        )
        return coefs, sweeps, conv, obj
    if penalty.method == "elastic-net":
        alpha = penalty.alpha
        w = np.ones_like(b)
    else:
        alpha = 1.0
        w = weights
    Gs, bs, s = _standardize(G, b)
    l1w = alpha * w / s
    rw = np.full_like(b, (1.0 - alpha)) / (s * s)
    coefs, sweeps, conv, obj = _cd.enet_path(
        Gs, bs, np.asarray(lams, dtype=float), l1w, rw,
        _MAX_SWEEPS, _TOL, record_objective,
    )
    return coefs / s, sweeps, conv, obj


def _warn_if_unconverged(converged: np.ndarray, context: str) -> None:
    if not np.all(converged):
        warnings.warn(f"coordinate descent hit the sweep cap in {context}; "
                      "returning the best iterate")


def fit_penalized_row(
    panel: TimePanel,
    row: int,
    order: int,
    penalty: PenaltySpec,
    return_diagnostics: bool = False,
):
    """Fit one VAR equation at the penalty's fixed strength.

    Returns the length n*order coefficient row in lag-major layout, on the
    original data scale. With return_diagnostics=True, also returns a dict
    with sweep counts, convergence flags and the per-sweep objective curve.
    """
    n = panel.n_series
    if not 0 <= row < n:
        raise DataError(f"row {row} outside 0..{n - 1}")
    G, B, yss, t_eff = _lagged_gram(panel.values, order)
    if t_eff <= n * order / 4:
        warnings.warn(f"short sample: {t_eff} observations for {n * order} regressors")
    b = B[:, row]
    weights = None
    if penalty.method == "adaptive-lasso":
        pre = _pre_estimator(G, B[:, [row]], yss[[row]], t_eff, penalty.pre_ridge)
        weights = _adaptive_weights(pre[:, 0])
    coefs, sweeps, conv, obj = _solve_row_path(
        G, b, [penalty.strength], penalty, weights, order, n,
        record_objective=return_diagnostics,
    )
    _warn_if_unconverged(conv, f"row {row}")
    if return_diagnostics:
        diag = {
            "sweeps": int(sweeps[0]),
            "converged": bool(conv[0]),
            "objective": obj[0, : sweeps[0]],
        }
        return coefs[0], diag
    return coefs[0]


def _map_rows(fn, n_rows: int, jobs: int | None):
    if jobs is not None and jobs == 1:
        return [fn(i) for i in range(n_rows)]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, range(n_rows)))


def _warm_kernels() -> None:
    """Trigger numba compilation once before threads fan out."""
    G = np.eye(2)
    b = np.zeros(2)
    lams = np.array([1.0])
    ones = np.ones(2)
    _cd.enet_path(G, b, lams, ones, ones, 1, 1e-7, False)
    _cd.group_path(G, b, lams, 2, 1, 1, 1e-7, False)


def select_bic(
    panel: TimePanel,
    p_grid,
    lambda_grid_size: int,
    penalty: PenaltySpec,
    jobs: int | None = None,
) -> BicSelection:
    """Scan (p, lambda) by the BIC criterion.

    Per row and candidate, BIC = T_eff*log(RSS/T_eff) + k*log(T_eff) with
    k the nonzero-coefficient count and T_eff = T - p. Lambda paths are
    log-spaced from each row's lambda_max down to 1e-3*lambda_max and solved
    with warm starts. Lambda is selected per row; the order is the mode of
    the per-row best orders so the model is one well-defined VAR(p).
    """
    p_grid = tuple(int(p) for p in p_grid)
    if not p_grid or min(p_grid) < 1:
        raise ConfigError("p_grid must be a nonempty list of orders >= 1")
    if lambda_grid_size < 1:
        raise ConfigError("lambda_grid_size must be >= 1")
    n = panel.n_series
    values = panel.values
    _warm_kernels()

    lambda_grids: dict[int, np.ndarray] = {}
    bic: dict[int, np.ndarray] = {}
    coefs: dict[int, np.ndarray] = {}
    for p in sorted(set(p_grid)):
        G, B, yss, t_eff = _lagged_gram(values, p)
        if t_eff <= n * p / 4:
            warnings.warn(f"short sample: {t_eff} observations for {n * p} regressors")
        pre = None
        if penalty.method == "adaptive-lasso":
            pre = _pre_estimator(G, B, yss, t_eff, penalty.pre_ridge)
        grids = np.empty((n, lambda_grid_size))
        bics = np.empty((n, lambda_grid_size))
        path_coefs = np.empty((n, lambda_grid_size, n * p))

        def solve_one(i: int, p=p, G=G, B=B, yss=yss, t_eff=t_eff, pre=pre,
                      grids=grids, bics=bics, path_coefs=path_coefs) -> None:
            b = B[:, i]
            weights = _adaptive_weights(pre[:, i]) if pre is not None else None
            lam_max = _lambda_max(b, penalty, weights, p, n)
            lams = _lambda_grid(lam_max, lambda_grid_size)
            path, _, conv, _ = _solve_row_path(G, b, lams, penalty, weights, p, n)
            _warn_if_unconverged(conv, f"row {i}, p={p}")
            rss = t_eff * np.maximum(
                yss[i] - 2.0 * path @ b + np.einsum("lj,jk,lk->l", path, G, path),
                1e-300,
            )
            k = np.count_nonzero(path, axis=1)
            grids[i] = lams
            bics[i] = t_eff * np.log(rss / t_eff) + k * np.log(t_eff)
            path_coefs[i] = path

        _map_rows(solve_one, n, jobs)
        lambda_grids[p] = grids
        bic[p] = bics
        coefs[p] = path_coefs

    # Per-row best (p, lambda); ascending p with strict improvement keeps the
    # smaller order on ties, argmin keeps the larger lambda (grids descend).
    row_best_p = np.empty(n, dtype=int)
    best_val = np.full(n, np.inf)
    for p in sorted(set(p_grid)):
        row_min = bic[p].min(axis=1)
        take = row_min < best_val
        row_best_p[take] = p
        best_val[take] = row_min[take]
    counts = np.bincount(row_best_p)
    selected_p = int(np.argmax(counts))
    row_lambda_index = bic[selected_p].argmin(axis=1)

    return BicSelection(
        p_grid=p_grid,
        lambda_grids=lambda_grids,
        bic=bic,
        row_best_p=row_best_p,
        selected_p=selected_p,
        row_lambda_index=row_lambda_index,
        coefs=coefs,
    )


def fit_sparse_var(
    panel: TimePanel,
    penalty: PenaltySpec | str = "elastic-net",
    p_grid=(1, 2, 3, 4, 5),
    lambda_grid_size: int = 10,
    jobs: int | None = None,
) -> SparseVarModel:
    """Fit the sparse VAR with BIC-selected order and per-row penalties."""
    if isinstance(penalty, str):
        penalty = PenaltySpec(method=penalty)
    selection = select_bic(panel, p_grid, lambda_grid_size, penalty, jobs=jobs)
    p = selection.selected_p
    n = panel.n_series
    T = panel.n_obs
    rows = np.arange(n)
    path = selection.coefs[p]
    flat = path[rows, selection.row_lambda_index]  # (n, n*p)
    coeffs = np.ascontiguousarray(
        flat.reshape(n, p, n).transpose(1, 0, 2)
    )  # (p, n, n)

    fitted = np.zeros((n, T - p))
    for k in range(1, p + 1):
        fitted += coeffs[k - 1] @ panel.values[:, p - k : T - k]
    resid_values = panel.values[:, p:] - fitted
    residuals = TimePanel(
        values=resid_values,
        labels=panel.labels,
        timestamps=panel.timestamps[p:],
        sectors=panel.sectors,
    )

    flags: list[str] = []
    centered = resid_values - resid_values.mean(axis=1, keepdims=True)
    cov = centered @ centered.T / centered.shape[1]
    cov = (cov + cov.T) / 2.0
    evs = np.linalg.eigvalsh(cov)
    if evs[0] <= 0.0 or evs[-1] / max(evs[0], 1e-300) > 1e12:
        ridge = 1e-8 * np.trace(cov) / n
        cov = cov + ridge * np.eye(n)
        flags.append("residual covariance ridge-repaired")
    try:
        precision = np.linalg.inv(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"residual covariance not invertible: {exc}") from exc
    precision = (precision + precision.T) / 2.0

    return SparseVarModel(
        order=p,
        coeffs=coeffs,
        residuals=residuals,
        residual_cov=cov,
        residual_precision=precision,
        row_lambdas=selection.selected_lambdas,
        penalty=penalty,
        labels=panel.labels,
        selection=selection,
        flags=flags,
    )


def kkt_violation(
    panel: TimePanel,
    row: int,
    order: int,
    penalty: PenaltySpec,
    coefs: np.ndarray,
) -> float:
    """Largest KKT violation of a candidate row solution, original scale."""
    n = panel.n_series
    G, B, yss, t_eff = _lagged_gram(panel.values, order)
    b = B[:, row]
    lam = penalty.strength
    if penalty.method == "group-lasso":
        return float(_cd.group_kkt_violation(G, b, coefs, lam, n, order))
    if penalty.method == "adaptive-lasso":
        pre = _pre_estimator(G, B[:, [row]], yss[[row]], t_eff, penalty.pre_ridge)
        l1w = _adaptive_weights(pre[:, 0])
        rw = np.zeros_like(b)
    else:
        l1w = np.full_like(b, penalty.alpha)
        rw = np.full_like(b, 1.0 - penalty.alpha)
    return float(_cd.enet_kkt_violation(G, b, coefs, lam, l1w, rw))
