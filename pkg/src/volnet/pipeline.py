"""Two-step volatility pipeline.

Step one fits a dynamic factor decomposition to returns and a sparse VAR to
the level-idiosyncratic part, producing two shock panels. Step two turns the
log squared shocks into volatility proxies, fits a second, joint factor
decomposition across both proxy panels (one market volatility shock), and
derives the variance-decomposition networks of the idiosyncratic volatility
via sparse VAR, partial-correlation ordering, and Cholesky identification.
"""
from __future__ import annotations

import contextlib
import json
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import stats

from .errors import ConfigError, DataError, NumericalError, VolnetError
from .factors import (
    BlockVarModel,
    CommonIdioSplit,
    FactorCount,
    FactorLoadings,
    block_var_residuals,
    common_lvdn_filter,
    estimate_block_var,
    estimate_factor_count,
    estimate_loadings_and_factors,
    split_common_idio,
)
from .identify import (
    CentralityRanking,
    CholeskiFactor,
    Pcn,
    eigenvector_centrality,
    estimate_pcn,
    order_and_choleski,
)
from .networks import (
    THRESHOLD_PERCENTILES,
    DegreeReport,
    FevdMatrix,
    Network,
    ThresholdResult,
    VmaFilter,
    degrees,
    export_network,
    fevd,
    invert_var,
    lgcn,
    network_from_fevd,
    threshold_lvdn,
)
from .panel import SectorMap, TimePanel, center
from .sparsevar import PenaltySpec, SparseVarModel, fit_sparse_var
from .spectral import autocovariances, common_spectrum_projection, estimate_spectral_density

__all__ = [
    "PipelineConfig",
    "VolatilityProxies",
    "JointFactorCounts",
    "SectoralShareTable",
    "TwoStepResult",
    "volatility_proxies",
    "joint_block_q",
    "sectoral_common_shares",
    "portmanteau_whiteness",
    "run_pipeline",
    "write_bundle",
    "STAGES",
]

STAGES = (
    "level_factor_count",
    "level_gdfm",
    "level_sparse_var",
    "volatility_proxies",
    "volatility_factor_count",
    "volatility_gdfm",
    "volatility_sparse_var",
    "networks",
)

_LOG_FLOOR_INPUT = 1e-8
_LOG_FLOOR_VALUE = float(np.log(1e-16))


@dataclass(frozen=True)
class PipelineConfig:
    """Numeric knobs of the two-step pipeline."""

    q_max: int | None = None
    horizon: int = 20
    penalty: str = "elastic-net"
    alpha: float = 0.5
    p_grid: tuple[int, ...] = (1, 2, 3, 4, 5)
    lambda_grid_size: int = 10
    block_max_order: int = 4
    bandwidth: int | None = None
    grid_size: int | None = None
    centrality_mode: str = "unsigned"
    threshold_percentiles: tuple[float, ...] = THRESHOLD_PERCENTILES
    threshold_objective: str = "match-full"
    whiteness_lags: int = 5
    whiteness_level: float = 0.05
    force_q_level: int | None = None
    force_q_vol: int | None = None
    jobs: int | None = None
    seed: int = 0

    def penalty_spec(self) -> PenaltySpec:
        return PenaltySpec(method=self.penalty, alpha=self.alpha)


@dataclass(frozen=True)
class VolatilityProxies:
    """Log squared shock panels, aligned on a common date window.

    The sigma side is absent (None) when the returns panel had no common
    shocks to take volatility proxies of.
    """

    sigma_panel: TimePanel | None
    omega_panel: TimePanel
    sigma_floor_count: np.ndarray | None
    omega_floor_count: np.ndarray


@dataclass(frozen=True)
class JointFactorCounts:
    """Factor counts of the two proxy panels and of the stacked panel."""

    sigma: FactorCount | None
    omega: FactorCount
    joint: FactorCount | None

    def as_tuple(self) -> tuple[int | None, int, int | None]:
        return (
            self.sigma.q if self.sigma else None,
            self.omega.q,
            self.joint.q if self.joint else None,
        )


@dataclass(frozen=True)
class SectoralShareTable:
    """Sector shares of the forecast-error variance due to the common shock."""

    shares: dict[str, float]

    def column_sum(self) -> float:
        return float(sum(self.shares.values()))


@dataclass
class TwoStepResult:
    """Everything the two-step pipeline produces.

    Sigma-side and market-shock fields are None on the degenerate paths
    (no common shocks at the level or volatility step).
    """

    config: PipelineConfig
    level_count: FactorCount
    q_level: int
    level_model: BlockVarModel | None
    level_loadings: FactorLoadings | None
    level_split: CommonIdioSplit
    eta: TimePanel | None
    level_var: SparseVarModel
    proxies: VolatilityProxies
    sigma_centered: TimePanel | None
    omega_centered: TimePanel
    vol_counts: JointFactorCounts
    q_vol: int
    sigma_model: BlockVarModel | None
    omega_model: BlockVarModel | None
    market_shock: np.ndarray | None
    sigma_split: CommonIdioSplit | None
    omega_split: CommonIdioSplit
    sigma_filter: VmaFilter | None
    omega_filter: VmaFilter | None
    sigma_shares: SectoralShareTable | None
    omega_shares: SectoralShareTable | None
    sigma_whiteness: tuple[float, int, float] | None
    omega_var: SparseVarModel
    omega_pcn: Pcn
    omega_ranking: CentralityRanking
    omega_chol: CholeskiFactor
    omega_vma: VmaFilter
    omega_fevd: FevdMatrix
    omega_degrees: DegreeReport
    omega_threshold: ThresholdResult
    omega_lvdn: Network
    omega_lgcn: Network
    omega_pcn_network: Network
    lvdn_centrality: CentralityRanking
    variance_shares: dict[str, float]
    sigma_var: SparseVarModel | None = None
    sigma_lvdn: Network | None = None
    stage_seconds: dict[str, float] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)


def log_square_proxy(panel: TimePanel) -> tuple[TimePanel, np.ndarray]:
    """Entrywise log squared values with a floor for near-zero entries.

    Entries below 1e-8 in magnitude are floored at log(1e-16); the per-series
    floor counts are returned alongside the proxy panel.
    """
    small = np.abs(panel.values) < _LOG_FLOOR_INPUT
    vals = np.where(small, 1.0, panel.values)
    out = np.where(small, _LOG_FLOOR_VALUE, np.log(vals * vals))
    return panel.with_values(out), small.sum(axis=1)


def volatility_proxies(eta: TimePanel, v: TimePanel) -> VolatilityProxies:
    """Log squared shock panels, aligned on their common dates."""
    common_dates = np.intersect1d(eta.timestamps, v.timestamps)
    if common_dates.size < 2:
        raise DataError("shock panels share fewer than 2 dates")

    def _slice(panel: TimePanel) -> TimePanel:
        mask = np.isin(panel.timestamps, common_dates)
        return TimePanel(
            values=panel.values[:, mask],
            labels=panel.labels,
            timestamps=panel.timestamps[mask],
            sectors=panel.sectors,
        )

    sigma, sigma_count = log_square_proxy(_slice(eta))
    omega, omega_count = log_square_proxy(_slice(v))
    return VolatilityProxies(
        sigma_panel=sigma,
        omega_panel=omega,
        sigma_floor_count=sigma_count,
        omega_floor_count=omega_count,
    )


def joint_block_q(
    sigma_centered: TimePanel,
    omega_centered: TimePanel,
    q_max: int,
    **criterion_kwargs,
) -> JointFactorCounts:
    """Factor counts of each proxy panel and of the 2n-row stacked panel."""
    if sigma_centered.n_obs != omega_centered.n_obs:
        raise DataError("proxy panels must share the same sample size")
    stacked = TimePanel(
        values=np.vstack([sigma_centered.values, omega_centered.values]),
        labels=tuple(f"sig:{s}" for s in sigma_centered.labels)
        + tuple(f"omg:{s}" for s in omega_centered.labels),
        timestamps=sigma_centered.timestamps,
    )
    return JointFactorCounts(
        sigma=estimate_factor_count(sigma_centered, q_max, **criterion_kwargs),
        omega=estimate_factor_count(omega_centered, q_max, **criterion_kwargs),
        joint=estimate_factor_count(stacked, q_max, **criterion_kwargs),
    )


def sectoral_common_shares(
    vma: VmaFilter,
    sectors: SectorMap,
    horizon: int | None = None,
) -> SectoralShareTable:
    """Sector shares of the variance moved by the single common shock.

    For sector j the share is 100 * sum over members and lags 0..h of the
    squared loadings, over the same sum across all series; the column sums
    to 100 by construction.
    """
    if vma.n_shocks != 1:
        raise DataError("sectoral shares are defined for a single common shock")
    h = vma.horizon if horizon is None else horizon
    if not 0 <= h <= vma.horizon:
        raise ConfigError(f"horizon must be in 0..{vma.horizon}")
    energy = np.einsum("kij,kij->i", vma.coefficients[: h + 1], vma.coefficients[: h + 1])
    total = float(energy.sum())
    if total <= 0.0:
        raise NumericalError("all-zero common filter has no variance to attribute")
    tags = sectors.for_labels(vma.series_labels)
    shares: dict[str, float] = {}
    for sec in sectors.sector_names():
        mask = np.array([t == sec for t in tags])
        shares[sec] = 100.0 * float(energy[mask].sum()) / total
    return SectoralShareTable(shares=shares)


def portmanteau_whiteness(panel: TimePanel, lags: int = 5) -> tuple[float, int, float]:
    """Multivariate portmanteau statistic against serial correlation.

    Returns (statistic, degrees of freedom, p-value); the statistic is
    T^2 * sum_k tr(C_k' C_0^{-1} C_k C_0^{-1}) / (T - k), asymptotically
    chi-square with n^2 * lags degrees of freedom under whiteness.
    """
    X = panel.values - panel.values.mean(axis=1, keepdims=True)
    n, T = X.shape
    if lags < 1 or lags >= T:
        raise ConfigError("lags must be in 1..T-1")
    C0 = X @ X.T / T
    evs = np.linalg.eigvalsh(C0)
    if evs[0] <= 1e-12 * max(evs[-1], 1e-300):
        C0 = C0 + (1e-8 * np.trace(C0) / n) * np.eye(n)
    C0_inv = np.linalg.inv(C0)
    stat = 0.0
    for k in range(1, lags + 1):
        Ck = X[:, k:] @ X[:, : T - k].T / T
        stat += float(np.trace(Ck.T @ C0_inv @ Ck @ C0_inv)) / (T - k)
    stat *= T * T
    df = n * n * lags
    pvalue = float(stats.chi2.sf(stat, df))
    return stat, df, pvalue


@contextlib.contextmanager
def _stage(name: str, timings: dict[str, float]):
    start = time.perf_counter()
    try:
        yield
    except VolnetError as exc:
        raise type(exc)(f"[stage {name}] {exc}") from exc
    finally:
        timings[name] = time.perf_counter() - start


def _default_q_max(n: int) -> int:
    return max(1, min(6, n - 2))


def _resolve_count(count: FactorCount, forced: int | None, label: str,
                   flags: list[str]) -> int:
    if forced is not None:
        if forced < 1:
            raise ConfigError(f"forced {label} factor count must be >= 1")
        if forced != count.q:
            flags.append(f"{label}: forced q={forced} over criterion q={count.q}")
        return forced
    if count.q == 0:
        flags.append(f"{label}: criterion selected q=0; no common component extracted")
    return count.q


def _trivial_split(panel: TimePanel) -> CommonIdioSplit:
    zeros = panel.with_values(np.zeros_like(panel.values))
    return CommonIdioSplit(
        common=zeros, idiosyncratic=panel, variance_share=0.0, burn_in=0
    )


def _gdfm_pass(panel: TimePanel, q: int, config: PipelineConfig):
    """Spectral projection, block VAR and filtered residuals for one panel."""
    spec = estimate_spectral_density(
        panel, bandwidth=config.bandwidth, grid_size=config.grid_size
    )
    proj = common_spectrum_projection(spec, q)
    acov = autocovariances(proj, max_lag=config.block_max_order)
    model = estimate_block_var(acov, q, max_order=config.block_max_order)
    residuals = block_var_residuals(panel, model)
    return model, residuals


def _drop_leading(panel: TimePanel, k: int) -> TimePanel:
    if k == 0:
        return panel
    return TimePanel(
        values=panel.values[:, k:],
        labels=panel.labels,
        timestamps=panel.timestamps[k:],
        sectors=panel.sectors,
    )


def run_pipeline(returns: TimePanel, config: PipelineConfig | None = None) -> TwoStepResult:
    """Run the full two-step procedure on a returns panel."""
    config = config or PipelineConfig()
    flags: list[str] = []
    timings: dict[str, float] = {}
    n = returns.n_series
    q_max = config.q_max or _default_q_max(n)
    sectors = returns.sector_map() if returns.sectors is not None else None
    penalty = config.penalty_spec()

    returns_c = center(returns)

    with _stage("level_factor_count", timings):
        level_count = estimate_factor_count(
            returns_c, q_max, bandwidth=config.bandwidth, grid_size=config.grid_size
        )
        q_level = _resolve_count(level_count, config.force_q_level, "level", flags)

    with _stage("level_gdfm", timings):
        if q_level >= 1:
            level_model, eta = _gdfm_pass(returns_c, q_level, config)
            level_loadings = estimate_loadings_and_factors(eta, q_level)
            level_split = split_common_idio(returns_c, level_model, level_loadings)
        else:
            level_model = None
            level_loadings = None
            eta = None
            level_split = _trivial_split(returns_c)

    with _stage("level_sparse_var", timings):
        xi = center(_drop_leading(level_split.idiosyncratic, level_split.burn_in))
        level_var = fit_sparse_var(
            xi,
            penalty,
            p_grid=config.p_grid,
            lambda_grid_size=config.lambda_grid_size,
            jobs=config.jobs,
        )

    with _stage("volatility_proxies", timings):
        if eta is not None:
            proxies = volatility_proxies(eta, level_var.residuals)
            sigma_c = center(proxies.sigma_panel)
        else:
            omega_panel, omega_count_floor = log_square_proxy(level_var.residuals)
            proxies = VolatilityProxies(
                sigma_panel=None,
                omega_panel=omega_panel,
                sigma_floor_count=None,
                omega_floor_count=omega_count_floor,
            )
            sigma_c = None
        omega_c = center(proxies.omega_panel)

    with _stage("volatility_factor_count", timings):
        if sigma_c is not None:
            vol_counts = joint_block_q(
                sigma_c, omega_c, q_max,
                bandwidth=config.bandwidth, grid_size=config.grid_size,
            )
            q_vol = _resolve_count(
                vol_counts.joint, config.force_q_vol, "volatility", flags
            )
            if vol_counts.sigma.q != q_vol or vol_counts.omega.q != q_vol:
                flags.append(
                    "volatility: per-panel counts "
                    f"({vol_counts.sigma.q}, {vol_counts.omega.q}) "
                    f"differ from joint {q_vol}"
                )
        else:
            omega_count = estimate_factor_count(
                omega_c, q_max, bandwidth=config.bandwidth, grid_size=config.grid_size
            )
            vol_counts = JointFactorCounts(sigma=None, omega=omega_count, joint=None)
            q_vol = _resolve_count(omega_count, config.force_q_vol, "volatility", flags)

    with _stage("volatility_gdfm", timings):
        sigma_model = omega_model = None
        market_shock = None
        sigma_split = None
        sigma_filter = omega_filter = None
        sigma_shares = omega_shares = None
        if q_vol == 0:
            omega_split = _trivial_split(omega_c)
            if sigma_c is not None:
                sigma_split = _trivial_split(sigma_c)
        elif sigma_c is None:
            omega_model, omega_resid = _gdfm_pass(omega_c, q_vol, config)
            omega_loadings = estimate_loadings_and_factors(omega_resid, q_vol)
            market_shock = omega_loadings.u
            omega_split = split_common_idio(omega_c, omega_model, omega_loadings)
            if q_vol == 1:
                shock = market_shock[0]
                scale = float(shock.std())
                keep = omega_split.common.n_obs - omega_split.burn_in
                avg_common = omega_split.common.values[:, -keep:].mean(axis=0)
                sh = shock[-keep:]
                corr = float((sh - sh.mean()) @ (avg_common - avg_common.mean()))
                sign = -1.0 if corr < 0.0 else 1.0
                if corr < 0.0:
                    market_shock = -market_shock
                omega_filter = common_lvdn_filter(
                    omega_model, omega_loadings, config.horizon,
                    K=np.array([[sign * scale]]),
                )
                if sectors is not None:
                    omega_shares = sectoral_common_shares(omega_filter, sectors)
        else:
            sigma_model, sigma_resid = _gdfm_pass(sigma_c, q_vol, config)
            omega_model, omega_resid = _gdfm_pass(omega_c, q_vol, config)
            p_joint = max(sigma_model.max_order, omega_model.max_order)
            sig_r = _drop_leading(sigma_resid, p_joint - sigma_model.max_order)
            omg_r = _drop_leading(omega_resid, p_joint - omega_model.max_order)
            stacked = TimePanel(
                values=np.vstack([sig_r.values, omg_r.values]),
                labels=tuple(f"sig:{s}" for s in sig_r.labels)
                + tuple(f"omg:{s}" for s in omg_r.labels),
                timestamps=sig_r.timestamps,
            )
            joint_loadings = estimate_loadings_and_factors(stacked, q_vol)
            market_shock = joint_loadings.u

            sigma_loadings = FactorLoadings(
                H=joint_loadings.H[:n],
                u=market_shock,
                K=np.eye(q_vol),
                labels=sigma_c.labels,
                timestamps=joint_loadings.timestamps,
            )
            omega_loadings = FactorLoadings(
                H=joint_loadings.H[n:],
                u=market_shock,
                K=np.eye(q_vol),
                labels=omega_c.labels,
                timestamps=joint_loadings.timestamps,
            )
            sigma_split = split_common_idio(
                _drop_leading(sigma_c, p_joint - sigma_model.max_order),
                sigma_model,
                sigma_loadings,
            )
            omega_split = split_common_idio(
                _drop_leading(omega_c, p_joint - omega_model.max_order),
                omega_model,
                omega_loadings,
            )

            if q_vol == 1:
                shock = market_shock[0]
                scale = float(shock.std())
                # Post-burn-in windows of the two splits can differ in
                # length; compare over the common tail (all series end on
                # the same date).
                keep = min(
                    sigma_split.common.n_obs - sigma_split.burn_in,
                    omega_split.common.n_obs - omega_split.burn_in,
                )
                avg_common = np.vstack(
                    [
                        sigma_split.common.values[:, -keep:],
                        omega_split.common.values[:, -keep:],
                    ]
                ).mean(axis=0)
                sh = shock[-keep:]
                corr = float((sh - sh.mean()) @ (avg_common - avg_common.mean()))
                sign = -1.0 if corr < 0.0 else 1.0
                if corr < 0.0:
                    market_shock = -market_shock
                K = np.array([[sign * scale]])
                sigma_filter = common_lvdn_filter(
                    sigma_model, sigma_loadings, config.horizon, K=K
                )
                omega_filter = common_lvdn_filter(
                    omega_model, omega_loadings, config.horizon, K=K
                )
                if sectors is not None:
                    sigma_shares = sectoral_common_shares(sigma_filter, sectors)
                    omega_shares = sectoral_common_shares(omega_filter, sectors)
            else:
                flags.append(
                    f"volatility: q={q_vol} > 1, singular filters and "
                    "sectoral shares skipped"
                )

    with _stage("volatility_sparse_var", timings):
        xi_omega = center(_drop_leading(omega_split.idiosyncratic, omega_split.burn_in))
        omega_var = fit_sparse_var(
            xi_omega,
            penalty,
            p_grid=config.p_grid,
            lambda_grid_size=config.lambda_grid_size,
            jobs=config.jobs,
        )
        omega_pcn = estimate_pcn(omega_var.residuals)
        if omega_pcn.weights.any():
            omega_ranking = eigenvector_centrality(
                omega_pcn.weights, mode=config.centrality_mode, directed=False
            )
        else:
            flags.append("volatility: empty PCN, falling back to the input ordering")
            omega_ranking = CentralityRanking(
                scores=np.zeros(n),
                order=np.arange(n),
                mode=config.centrality_mode,
                eigenvector=np.zeros(n),
            )
        omega_chol = order_and_choleski(omega_var.residuals, omega_ranking)

        sigma_whiteness = None
        sigma_var = None
        sigma_lvdn = None
        if sigma_split is not None:
            xi_sigma = center(
                _drop_leading(sigma_split.idiosyncratic, sigma_split.burn_in)
            )
            sigma_whiteness = portmanteau_whiteness(
                xi_sigma, lags=config.whiteness_lags
            )
            if sigma_whiteness[2] < config.whiteness_level:
                flags.append(
                    "sigma idiosyncratic panel rejects whiteness "
                    f"(p={sigma_whiteness[2]:.4f}); fitting its network too"
                )
                sigma_var = fit_sparse_var(
                    xi_sigma,
                    penalty,
                    p_grid=config.p_grid,
                    lambda_grid_size=config.lambda_grid_size,
                    jobs=config.jobs,
                )
            else:
                flags.append(
                    "sigma idiosyncratic panel passes the whiteness diagnostic "
                    f"(p={sigma_whiteness[2]:.4f}); skipping its network"
                )

    with _stage("networks", timings):
        omega_vma = invert_var(omega_var, omega_chol, config.horizon)
        omega_fevd_perm = fevd(omega_vma)
        omega_fevd = omega_fevd_perm.to_original_order()
        omega_degrees = degrees(omega_fevd, sectors)
        omega_threshold = threshold_lvdn(
            omega_fevd,
            percentiles=config.threshold_percentiles,
            objective=config.threshold_objective,
        )
        omega_lvdn = network_from_fevd(omega_fevd, kind="LVDN")
        omega_lgcn = lgcn(omega_var)
        omega_pcn_network = Network(
            adjacency=omega_pcn.weights,
            labels=omega_pcn.labels,
            kind="PCN",
            sectors=omega_c.sectors,
        )
        lvdn_centrality = eigenvector_centrality(
            omega_fevd.weights, mode="unsigned", directed=True
        )
        if sigma_var is not None:
            sigma_pcn = estimate_pcn(sigma_var.residuals)
            if sigma_pcn.weights.any():
                sig_rank = eigenvector_centrality(
                    sigma_pcn.weights, mode=config.centrality_mode, directed=False
                )
            else:
                sig_rank = CentralityRanking(
                    scores=np.zeros(n), order=np.arange(n),
                    mode=config.centrality_mode, eigenvector=np.zeros(n),
                )
            sig_chol = order_and_choleski(sigma_var.residuals, sig_rank)
            sig_vma = invert_var(sigma_var, sig_chol, config.horizon)
            sigma_lvdn = network_from_fevd(fevd(sig_vma).to_original_order(), kind="LVDN")

    shares = {
        "level": level_split.variance_share,
        "sigma": sigma_split.variance_share if sigma_split is not None else None,
        "omega": omega_split.variance_share,
    }
    return TwoStepResult(
        config=config,
        level_count=level_count,
        q_level=q_level,
        level_model=level_model,
        level_loadings=level_loadings,
        level_split=level_split,
        eta=eta,
        level_var=level_var,
        proxies=proxies,
        sigma_centered=sigma_c,
        omega_centered=omega_c,
        vol_counts=vol_counts,
        q_vol=q_vol,
        sigma_model=sigma_model,
        omega_model=omega_model,
        market_shock=market_shock,
        sigma_split=sigma_split,
        omega_split=omega_split,
        sigma_filter=sigma_filter,
        omega_filter=omega_filter,
        sigma_shares=sigma_shares,
        omega_shares=omega_shares,
        sigma_whiteness=sigma_whiteness,
        omega_var=omega_var,
        omega_pcn=omega_pcn,
        omega_ranking=omega_ranking,
        omega_chol=omega_chol,
        omega_vma=omega_vma,
        omega_fevd=omega_fevd,
        omega_degrees=omega_degrees,
        omega_threshold=omega_threshold,
        omega_lvdn=omega_lvdn,
        omega_lgcn=omega_lgcn,
        omega_pcn_network=omega_pcn_network,
        lvdn_centrality=lvdn_centrality,
        variance_shares=shares,
        sigma_var=sigma_var,
        sigma_lvdn=sigma_lvdn,
        stage_seconds=timings,
        flags=flags,
    )


def _write_panel(panel: TimePanel, path: Path) -> None:
    panel.to_frame().to_csv(path, float_format="%.17g", compression="gzip")


def write_bundle(result: TwoStepResult, outdir: str | Path,
                 input_panel: TimePanel | None = None) -> Path:
    """Write the result bundle: panels, networks, tables, and a manifest."""
    outdir = Path(outdir)
    panels_dir = outdir / "panels"
    networks_dir = outdir / "networks"
    tables_dir = outdir / "tables"
    for d in (panels_dir, networks_dir, tables_dir):
        d.mkdir(parents=True, exist_ok=True)

    if input_panel is not None:
        _write_panel(input_panel, panels_dir / "returns.csv.gz")
    _write_panel(result.level_split.common, panels_dir / "level_common.csv.gz")
    _write_panel(result.level_split.idiosyncratic, panels_dir / "level_idio.csv.gz")
    if result.proxies.sigma_panel is not None:
        _write_panel(result.proxies.sigma_panel, panels_dir / "sigma.csv.gz")
    _write_panel(result.proxies.omega_panel, panels_dir / "omega.csv.gz")
    if result.sigma_split is not None:
        _write_panel(result.sigma_split.common, panels_dir / "sigma_common.csv.gz")
        _write_panel(result.sigma_split.idiosyncratic, panels_dir / "sigma_idio.csv.gz")
    _write_panel(result.omega_split.common, panels_dir / "omega_common.csv.gz")
    _write_panel(result.omega_split.idiosyncratic, panels_dir / "omega_idio.csv.gz")

    for name, net in (
        ("lvdn_omega", result.omega_lvdn),
        ("lgcn_omega", result.omega_lgcn),
        ("pcn_omega", result.omega_pcn_network),
    ):
        export_network(net, networks_dir / f"{name}_adjacency.csv", "adjacency")
        export_network(net, networks_dir / f"{name}_edges.csv", "edges")
        export_network(net, networks_dir / f"{name}.gexf", "gexf")
    thresh_net = Network(
        adjacency=result.omega_threshold.thresholded,
        labels=result.omega_lvdn.labels,
        kind="LVDN",
        sectors=result.omega_lvdn.sectors,
    )
    export_network(thresh_net, networks_dir / "lvdn_omega_thresholded_adjacency.csv", "adjacency")
    for name, model in (("level", result.level_var), ("omega", result.omega_var)):
        np.savetxt(
            networks_dir / f"var_{name}_coefficients.csv",
            model.to_triplets(),
            delimiter=",",
            header="row,col,lag,value",
            comments="",
            fmt=("%d", "%d", "%d", "%.17g"),
        )
    if result.sigma_lvdn is not None:
        export_network(result.sigma_lvdn, networks_dir / "lvdn_sigma_adjacency.csv", "adjacency")

    deg = result.omega_degrees
    pd.DataFrame(
        {
            "label": list(deg.labels),
            "from_degree": deg.from_degrees,
            "to_degree": deg.to_degrees,
        }
    ).to_csv(tables_dir / "degrees.csv", index=False, float_format="%.17g")
    if deg.sector_from:
        pd.DataFrame(
            {
                "sector": list(deg.sector_from),
                "from_degree": list(deg.sector_from.values()),
                "to_degree": [deg.sector_to[s] for s in deg.sector_from],
            }
        ).to_csv(tables_dir / "sector_degrees.csv", index=False, float_format="%.17g")
    if result.sigma_shares is not None:
        pd.DataFrame(
            {
                "sector": list(result.sigma_shares.shares),
                "sigma_share": list(result.sigma_shares.shares.values()),
                "omega_share": [
                    result.omega_shares.shares[s] for s in result.sigma_shares.shares
                ],
            }
        ).to_csv(tables_dir / "sectoral_shares.csv", index=False, float_format="%.17g")
    rank = result.omega_ranking
    pd.DataFrame(
        {
            "rank": np.arange(1, rank.n_nodes + 1),
            "label": [result.omega_pcn.labels[i] for i in rank.order],
            "score": rank.scores[rank.order],
        }
    ).to_csv(tables_dir / "centrality_pcn.csv", index=False, float_format="%.17g")
    lrank = result.lvdn_centrality
    pd.DataFrame(
        {
            "rank": np.arange(1, lrank.n_nodes + 1),
            "label": [result.omega_lvdn.labels[i] for i in lrank.order],
            "score": lrank.scores[lrank.order],
        }
    ).to_csv(tables_dir / "centrality_lvdn.csv", index=False, float_format="%.17g")
    pd.DataFrame(
        {
            "component": list(result.variance_shares),
            "share": list(result.variance_shares.values()),
        }
    ).to_csv(tables_dir / "variance_shares.csv", index=False, float_format="%.17g")
    counts = result.vol_counts
    pd.DataFrame(
        {
            "panel": ["level", "sigma", "omega", "joint"],
            "q": [
                result.level_count.q,
                counts.sigma.q if counts.sigma else None,
                counts.omega.q,
                counts.joint.q if counts.joint else None,
            ],
            "stable": [
                result.level_count.stable,
                counts.sigma.stable if counts.sigma else None,
                counts.omega.stable,
                counts.joint.stable if counts.joint else None,
            ],
        }
    ).to_csv(tables_dir / "factor_counts.csv", index=False)

    from . import __version__

    manifest = {
        "version": __version__,
        "seed": result.config.seed,
        "config": asdict(result.config),
        "q_level": result.q_level,
        "q_vol": result.q_vol,
        "variance_shares": result.variance_shares,
        "whiteness_sigma": None
        if result.sigma_whiteness is None
        else {
            "statistic": result.sigma_whiteness[0],
            "df": result.sigma_whiteness[1],
            "pvalue": result.sigma_whiteness[2],
        },
        "threshold_tau": result.omega_threshold.tau,
        "flags": result.flags,
        "stage_seconds": result.stage_seconds,
    }
    (outdir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, default=_json_default), encoding="utf-8"
    )
    return outdir


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj)}")
