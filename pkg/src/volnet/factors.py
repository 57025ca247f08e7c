"""Dynamic factor estimation for large panels.

The common component is recovered through its one-sided block VAR
representation: estimate the spectral density, project onto the q leading
dynamic principal components, invert to autocovariances, fit small
block-diagonal VAR filters by Yule-Walker, extract the factor space from the
filtered residuals, and rebuild the common component recursively. The number
of factors comes from an information criterion on the tail means of the
dynamic eigenvalues, tuned by a stability scan over nested subpanels.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, NumericalError
from .networks import VmaFilter
from .panel import TimePanel, center
from .spectral import AutocovarianceSequence, estimate_spectral_density

__all__ = [
    "FactorCount",
    "BlockVarModel",
    "FactorLoadings",
    "CommonIdioSplit",
    "estimate_factor_count",
    "estimate_block_var",
    "block_var_residuals",
    "estimate_loadings_and_factors",
    "split_common_idio",
    "common_lvdn_filter",
]

_STABLE_RADIUS = 0.98


@dataclass(frozen=True)
class FactorCount:
    """Selected factor count with the criterion scan diagnostics.

    criterion[c_idx, q] holds the full-panel information criterion; scatter
    is the across-subpanel standard deviation of the selected count at each
    penalty scale. stable is False when no plateau was found and the count
    fell back to the penalty scale closest to 1.
    """

    q: int
    c_grid: np.ndarray
    criterion: np.ndarray
    q_by_scale: np.ndarray
    scatter: np.ndarray
    subpanel_sizes: tuple[int, ...]
    stable: bool

    def dump_diagnostics(self, path) -> None:
        """Debug dump: per penalty scale, the selected q and its scatter."""
        np.savetxt(
            path,
            np.column_stack([self.c_grid, self.q_by_scale, self.scatter]),
            delimiter=",",
            header="c,selected_q,subpanel_std",
            comments="",
        )


@dataclass
class BlockVarModel:
    """Block-diagonal VAR filters for the common component."""

    blocks: list[np.ndarray]  # contiguous index arrays partitioning 0..n-1
    coeffs: list[np.ndarray]  # per block (p_b, b, b)
    orders: list[int]
    shrunk: list[bool]
    labels: tuple[str, ...]

    @property
    def n_series(self) -> int:
        return sum(len(b) for b in self.blocks)

    @property
    def max_order(self) -> int:
        return max(self.orders) if self.orders else 0

    def full_coefficients(self) -> np.ndarray:
        """Assemble dense (p_max, n, n) block-diagonal lag matrices."""
        n = self.n_series
        p_max = self.max_order
        out = np.zeros((p_max, n, n))
        for idx, coeffs in zip(self.blocks, self.coeffs):
            for k in range(coeffs.shape[0]):
                out[np.ix_([k], idx, idx)] = coeffs[k]
        return out

    def spectral_radius(self) -> float:
        worst = 0.0
        for coeffs in self.coeffs:
            worst = max(worst, _block_radius(coeffs))
        return worst

    def is_stable(self) -> bool:
        return self.spectral_radius() < 1.0


@dataclass(frozen=True)
class FactorLoadings:
    """Loadings H, whitened factor shocks u, and the identification matrix K."""

    H: np.ndarray  # (n, q)
    u: np.ndarray  # (q, T_eff), sample covariance = I
    K: np.ndarray  # (q, q)
    labels: tuple[str, ...]
    timestamps: np.ndarray

    @property
    def n_factors(self) -> int:
        return self.H.shape[1]


@dataclass(frozen=True)
class CommonIdioSplit:
    """Common + idiosyncratic decomposition; the sum equals the input exactly."""

    common: TimePanel
    idiosyncratic: TimePanel
    variance_share: float
    burn_in: int


def _circle_mean_eigenvalues(mats: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Full-circle means of the eigenvalues of a principal submatrix."""
    sub = mats[np.ix_(np.arange(mats.shape[0]), idx, idx)]
    evals = np.linalg.eigvalsh(sub)[:, ::-1]
    w = np.full(mats.shape[0], 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    return (w[:, None] * evals).sum(axis=0) / (2.0 * (mats.shape[0] - 1))


def estimate_factor_count(
    panel: TimePanel,
    q_max: int,
    c_grid: np.ndarray | None = None,
    n_subpanels: int = 10,
    min_plateau: int = 3,
    bandwidth: int | None = None,
    grid_size: int | None = None,
) -> FactorCount:
    """Select the number of pervasive factors of a panel.

    For candidate count q the criterion is

        IC_c(q) = log( (1/m) * sum_{i>q} mean_theta lambda_i(theta) )
                  + q * c * p(m, T),
        p(m, T) = min(m, sqrt(T))^(-1/2) * log(min(m, sqrt(T))),

    evaluated on nested subpanels of sizes m = round(n*r/R), r = 1..R. Each
    subpanel samples series at even strides so block-ordered panels stay
    represented at every size. The count is read off the first plateau of
    penalty scales c on which the selection neither moves across scales nor
    scatters across subpanels, skipping the trivial small-c plateau at
    q_max. Without a plateau the count at c = 1 is returned with
    stable=False and a warning.
    """
    n = panel.n_series
    if not 1 <= q_max < n:
        raise DataError(f"q_max must be in 1..{n - 1}, got {q_max}")
    if c_grid is None:
        c_grid = np.linspace(0.01, 3.0, 60)
    c_grid = np.asarray(c_grid, dtype=float)
    T = panel.n_obs
    spec = estimate_spectral_density(center(panel), bandwidth=bandwidth, grid_size=grid_size)

    sizes = sorted({int(round(n * r / n_subpanels)) for r in range(1, n_subpanels + 1)})
    sizes = [m for m in sizes if m >= q_max + 2]
    if n not in sizes:
        sizes.append(n)
    if len(sizes) < 2:
        raise DataError("panel too small for the subpanel stability scan")

    sqrt_t = np.sqrt(T)
    qs = np.arange(q_max + 1)
    ic_full = None
    selected = np.empty((len(c_grid), len(sizes)), dtype=int)
    for m_idx, m in enumerate(sizes):
        idx = np.round(np.linspace(0, n - 1, m)).astype(int)
        lam = _circle_mean_eigenvalues(spec.matrices, idx)
        tail = np.array([lam[q:].sum() / m for q in qs])
        log_tail = np.log(np.maximum(tail, 1e-300))
        eff = min(m, sqrt_t)
        pen = eff ** (-0.5) * np.log(eff)
        ic = log_tail[None, :] + np.outer(c_grid, qs) * pen
        selected[:, m_idx] = ic.argmin(axis=1)
        if m == n:
            ic_full = ic

    scatter = selected.std(axis=1)
    q_by_scale = selected[:, -1]

    q_hat = None
    stable = False
    run_start = 0
    for idx in range(1, len(c_grid) + 1):
        boundary = (
            idx == len(c_grid)
            or scatter[idx] > 0.0
            or q_by_scale[idx] != q_by_scale[run_start]
            or scatter[run_start] > 0.0
        )
        if not boundary:
            continue
        run_len = idx - run_start
        if (
            scatter[run_start] == 0.0
            and run_len >= min_plateau
            and q_by_scale[run_start] < q_max
            and q_hat is None
        ):
            q_hat = int(q_by_scale[run_start])
            stable = True
        run_start = idx
    if q_hat is None:
        c_one = int(np.argmin(np.abs(c_grid - 1.0)))
        q_hat = int(q_by_scale[c_one])
        warnings.warn("no stability plateau found; returning the count at c = 1")

    return FactorCount(
        q=q_hat,
        c_grid=c_grid,
        criterion=ic_full,
        q_by_scale=q_by_scale,
        scatter=scatter,
        subpanel_sizes=tuple(sizes),
        stable=stable,
    )


def _block_radius(coeffs: np.ndarray) -> float:
    p, b, _ = coeffs.shape
    if p == 0 or not coeffs.any():
        return 0.0
    comp = np.zeros((b * p, b * p))
    comp[:b] = coeffs.transpose(1, 0, 2).reshape(b, b * p)
    if p > 1:
        comp[b:, :-b] = np.eye(b * (p - 1))
    return float(np.max(np.abs(np.linalg.eigvals(comp))))


def _yule_walker(gammas: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Solve the order-p Yule-Walker system for one block.

    Returns the (p, b, b) coefficients and the implied residual covariance.
    Rank-deficient Toeplitz systems (singular projected spectra) get the
    minimum-norm solution; an inconsistent system raises.
    """
    b = gammas.shape[1]
    G = np.empty((order * b, order * b))
    for i in range(order):
        for j in range(order):
            lag = j - i
            blk = gammas[lag] if lag >= 0 else gammas[-lag].T
            G[i * b : (i + 1) * b, j * b : (j + 1) * b] = blk
    C = np.concatenate([gammas[k] for k in range(1, order + 1)], axis=1)  # (b, p*b)
    # Rank-q projected spectra make these systems singular by construction.
    # The truncated solve returns the minimum-norm solution and treats
    # directions below 1% of the leading singular value as estimation noise;
    # keeping them produces near-cancelling filters that explode on inversion.
    sol, *_ = np.linalg.lstsq(G.T, C.T, rcond=1e-2)
    sol = sol.T
    resid = C.T - G.T @ sol.T
    scale = max(float(np.abs(gammas[0]).max()), 1e-300)
    if float(np.abs(resid).max()) > 5e-2 * scale:
        # Large residuals are usually truncation at work; a genuinely
        # inconsistent system leaves them even without truncation.
        full_sol, *_ = np.linalg.lstsq(G.T, C.T, rcond=1e-12)
        full_resid = C.T - G.T @ full_sol
        if float(np.abs(full_resid).max()) > 1e-6 * scale:
            raise NumericalError("singular block Toeplitz system is inconsistent")
    coeffs = sol.reshape(b, order, b).transpose(1, 0, 2)
    sigma = gammas[0].copy()
    for k in range(1, order + 1):
        sigma -= coeffs[k - 1] @ gammas[k].T
    return coeffs, (sigma + sigma.T) / 2.0


def _partition(n: int, block_size: int) -> list[np.ndarray]:
    m = n // block_size
    sizes = [block_size] * m
    if sizes:
        sizes[-1] += n % block_size
    else:
        sizes = [n]
    blocks = []
    start = 0
    for size in sizes:
        blocks.append(np.arange(start, start + size))
        start += size
    return blocks


def estimate_block_var(
    autocov: AutocovarianceSequence,
    q: int,
    max_order: int = 4,
    n_obs: int | None = None,
) -> BlockVarModel:
    """Yule-Walker block VAR fits on contiguous blocks of size q+1.

    When n is not a multiple of q+1 the last block absorbs the remainder.
    Per-block orders minimize a BIC over 1..max_order on the pooled residual
    variance. Kernel smoothing leaves roughly n_obs/bandwidth effective
    observations behind each autocovariance, so that ratio (when the
    metadata carries it) sets the BIC sample size; analytic sequences fall
    back to 1000, where ties resolve to the smallest order. Unstable blocks
    are shrunk geometrically toward zero and flagged.
    """
    n = autocov.n_series
    if q + 1 > n:
        raise DataError(f"block size q+1={q + 1} exceeds panel size {n}")
    if max_order < 1:
        raise ConfigError("max_order must be >= 1")
    if autocov.max_lag < max_order:
        raise DataError(
            f"need autocovariances up to lag {max_order}, have {autocov.max_lag}"
        )
    t_eff = n_obs or autocov.n_obs or 1000
    if n_obs is None and autocov.n_obs is not None and autocov.bandwidth:
        t_eff = max(int(round(autocov.n_obs / autocov.bandwidth)), 10)

    blocks = _partition(n, q + 1)
    coeff_list: list[np.ndarray] = []
    orders: list[int] = []
    shrunk_flags: list[bool] = []
    n_lags = autocov.gammas.shape[0]
    for idx in blocks:
        sub = autocov.gammas[np.ix_(np.arange(n_lags), idx, idx)]
        best = None
        b = len(idx)
        for p in range(1, max_order + 1):
            coeffs, sigma = _yule_walker(sub, p)
            # Pooled residual variance rather than a log determinant: the
            # projected autocovariances make sigma rank deficient, which a
            # determinant-based criterion cannot rank.
            pooled = max(float(np.trace(sigma)) / b, 1e-300)
            k_params = p * b * b
            bic = t_eff * b * np.log(pooled) + k_params * np.log(t_eff)
            if best is None or bic < best[0] - 1e-9:
                best = (bic, p, coeffs)
        _, p_star, coeffs = best
        shrunk = False
        radius = _block_radius(coeffs)
        if radius >= 1.0:
            scale = _STABLE_RADIUS / radius
            coeffs = coeffs * scale ** np.arange(1, p_star + 1)[:, None, None]
            shrunk = True
        coeff_list.append(coeffs)
        orders.append(p_star)
        shrunk_flags.append(shrunk)
    labels = autocov.labels or tuple(f"s{i}" for i in range(n))
    return BlockVarModel(
        blocks=blocks,
        coeffs=coeff_list,
        orders=orders,
        shrunk=shrunk_flags,
        labels=labels,
    )


def block_var_residuals(panel: TimePanel, model: BlockVarModel) -> TimePanel:
    """Apply the block VAR filter to a panel: e_t = y_t - sum_k A_k y_{t-k}.

    The first max(p_b) columns are burn-in and dropped from the output.
    """
    if model.n_series != panel.n_series:
        raise DataError("panel and block model dimensions disagree")
    p = model.max_order
    if p == 0:
        return panel
    A = model.full_coefficients()
    T = panel.n_obs
    resid = panel.values[:, p:].copy()
    for k in range(1, p + 1):
        resid -= A[k - 1] @ panel.values[:, p - k : T - k]
    return TimePanel(
        values=resid,
        labels=panel.labels,
        timestamps=panel.timestamps[p:],
        sectors=panel.sectors,
    )


def estimate_loadings_and_factors(residuals: TimePanel, q: int) -> FactorLoadings:
    """Leading eigenspace of the residual covariance, with whitened factors.

    H holds the q leading eigenvectors scaled by root eigenvalues; u is the
    projection of the centered residuals whitened to exactly unit sample
    covariance. Each eigenvector is oriented to have positive entry sum.
    """
    n, T = residuals.values.shape
    if not 1 <= q <= n:
        raise DataError(f"q must be in 1..{n}, got {q}")
    X = residuals.values - residuals.values.mean(axis=1, keepdims=True)
    S = X @ X.T / T
    evals, evecs = np.linalg.eigh(S)
    evals = evals[::-1][:q].copy()
    evecs = evecs[:, ::-1][:, :q].copy()
    if evals[-1] <= max(evals[0], 1e-300) * 1e-12:
        raise NumericalError(f"residual covariance has rank below q={q}")
    for k in range(q):
        total = evecs[:, k].sum()
        if total < 0.0 or (total == 0.0 and evecs[np.abs(evecs[:, k]).argmax(), k] < 0.0):
            evecs[:, k] = -evecs[:, k]
    H = evecs * np.sqrt(evals)
    u = (evecs / np.sqrt(evals)).T @ X
    return FactorLoadings(
        H=H,
        u=u,
        K=np.eye(q),
        labels=residuals.labels,
        timestamps=residuals.timestamps,
    )


def _drive_recursion(model: BlockVarModel, drive: np.ndarray) -> np.ndarray:
    """Solve A(L) x_t = drive_t with zero pre-sample values."""
    n, T = drive.shape
    A = model.full_coefficients()
    p = model.max_order
    x = np.zeros((n, T))
    for t in range(T):
        acc = drive[:, t].copy()
        for k in range(1, min(t, p) + 1):
            acc += A[k - 1] @ x[:, t - k]
        x[:, t] = acc
    return x


def split_common_idio(
    panel: TimePanel,
    model: BlockVarModel,
    loadings: FactorLoadings,
) -> CommonIdioSplit:
    """Common component by filter inversion, idiosyncratic as the remainder.

    x_t = A(L)^{-1} H u_t is built recursively over the residual window with
    zero pre-sample values; the first max(p_b) columns stay zero and are
    flagged as burn-in. The identity common + idiosyncratic = panel holds
    exactly; the variance share is computed past the burn-in.
    """
    if not model.is_stable():
        raise NumericalError(
            f"unstable block VAR (radius {model.spectral_radius():.4f})"
        )
    n, T = panel.values.shape
    if loadings.H.shape[0] != n:
        raise DataError("loadings dimension does not match the panel")
    p = model.max_order
    if loadings.u.shape[1] != T - p:
        raise DataError(
            f"{loadings.u.shape[1]} factor shocks for {T - p} post-burn-in columns"
        )
    drive = loadings.H @ loadings.u
    X = np.zeros((n, T))
    X[:, p:] = _drive_recursion(model, drive)
    Z = panel.values - X
    tail = slice(p, None)
    share_num = float(X[:, tail].var(axis=1).sum())
    share_den = float(panel.values[:, tail].var(axis=1).sum())
    share = share_num / share_den if share_den > 0.0 else 0.0
    if share > 1.0 + 1e-6:
        # The spectral projection is not a variance contraction; on panels
        # that are almost entirely common the estimate can overshoot slightly.
        warnings.warn(f"common variance share {share:.6f} exceeds 1")
    common = TimePanel(
        values=X,
        labels=panel.labels,
        timestamps=panel.timestamps,
        sectors=panel.sectors,
    )
    idio = TimePanel(
        values=Z,
        labels=panel.labels,
        timestamps=panel.timestamps,
        sectors=panel.sectors,
    )
    return CommonIdioSplit(
        common=common, idiosyncratic=idio, variance_share=share, burn_in=p
    )


def common_lvdn_filter(
    model: BlockVarModel,
    loadings: FactorLoadings,
    horizon: int,
    K: np.ndarray | None = None,
) -> VmaFilter:
    """Moving-average filter B_0..B_h of the common component.

    B_k = Psi_k H K where Psi is the inverse of the block VAR filter. For a
    single factor K defaults to sign * scale: the sign makes the shock
    correlate positively with the cross-sectional average of the implied
    common components and the scale normalizes the shock to unit standard
    deviation. With several factors K must be supplied.
    """
    if horizon < 1:
        raise ConfigError("horizon must be >= 1")
    if not model.is_stable():
        raise NumericalError("unstable block VAR cannot be inverted")
    q = loadings.n_factors
    n = model.n_series
    if K is None:
        if q != 1:
            raise ConfigError("K must be supplied when q > 1")
        u = loadings.u[0]
        scale = float(u.std())
        if scale <= 0.0:
            raise NumericalError("degenerate factor shock")
        common = _drive_recursion(model, loadings.H @ loadings.u)
        xbar = common.mean(axis=0)
        xbar_c = xbar - xbar.mean()
        u_c = u - u.mean()
        corr = float(u_c @ xbar_c)
        sign = -1.0 if corr < 0.0 else 1.0
        K = np.array([[sign * scale]])
    else:
        K = np.asarray(K, dtype=float).reshape(q, q)

    A = model.full_coefficients()
    p = model.max_order
    psi = np.empty((horizon + 1, n, n))
    psi[0] = np.eye(n)
    for k in range(1, horizon + 1):
        acc = np.zeros((n, n))
        for s in range(1, min(k, p) + 1):
            acc += A[s - 1] @ psi[k - s]
        psi[k] = acc
    HK = loadings.H @ K
    coeffs = psi @ HK
    return VmaFilter(
        coefficients=coeffs,
        horizon=horizon,
        series_labels=loadings.labels,
        shock_labels=tuple(f"common_{k + 1}" for k in range(q)),
    )
