"""Synthetic panels with known factor and sparse-VAR ground truth."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError
from .panel import TimePanel, synthetic_timestamps
from .sparsevar import companion_spectral_radius

__all__ = ["DgpSpec", "GroundTruth", "simulate"]

_TARGET_RADIUS = 0.95
_BURN_IN = 200


@dataclass(frozen=True)
class DgpSpec:
    """Specification of a factor-plus-sparse-VAR data generating process.

    The panel is loadings @ AR-factors + a sparse VAR driven by innovations
    with a known sparse precision matrix. Components are rescaled so the
    common:idiosyncratic variance ratio hits `variance_ratio` within 1%.
    """

    n: int = 20
    T: int = 1000
    q: int = 1
    factor_ar: tuple[float, ...] = (0.7,)
    loading_scale: float = 1.0
    loading_spread: float = 0.5
    idio_order: int = 0
    idio_density: float = 0.0
    precision_density: float = 0.0
    variance_ratio: float = 1.0
    heavy_tails: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n < 2 or self.T < 2:
            raise ConfigError("need n >= 2 and T >= 2")
        if self.q < 0 or self.q >= self.n:
            raise ConfigError("need 0 <= q < n")
        if self.q > 0 and len(self.factor_ar) not in (1, self.q):
            raise ConfigError("factor_ar must have 1 or q entries")
        if any(abs(a) >= 1.0 for a in self.factor_ar):
            raise ConfigError("factor AR coefficients must be inside (-1, 1)")
        if self.idio_order < 0:
            raise ConfigError("idio_order must be >= 0")
        if not 0.0 <= self.idio_density <= 1.0:
            raise ConfigError("idio_density must be in [0, 1]")
        if not 0.0 <= self.precision_density <= 1.0:
            raise ConfigError("precision_density must be in [0, 1]")
        if self.variance_ratio < 0.0:
            raise ConfigError("variance_ratio must be >= 0")


@dataclass(frozen=True)
class GroundTruth:
    """True parameters behind a simulated panel."""

    loadings: np.ndarray  # (n, q)
    factors: np.ndarray  # (q, T)
    var_coeffs: np.ndarray  # (p, n, n)
    precision: np.ndarray  # (n, n)
    common: np.ndarray  # (n, T)
    idiosyncratic: np.ndarray  # (n, T)
    seed: int

    def var_support(self) -> np.ndarray:
        return self.var_coeffs != 0.0

    def precision_support(self) -> np.ndarray:
        off = self.precision != 0.0
        np.fill_diagonal(off, False)
        return off


def _sparse_var_coefficients(rng: np.random.Generator, n: int, order: int,
                             density: float) -> np.ndarray:
    coeffs = np.zeros((order, n, n))
    if order == 0 or density == 0.0:
        return coeffs
    mask = rng.random((order, n, n)) < density
    signs = rng.choice([-1.0, 1.0], size=(order, n, n))
    coeffs = np.where(mask, signs * rng.uniform(0.25, 0.5, size=(order, n, n)), 0.0)
    radius = companion_spectral_radius(coeffs)
    if radius >= _TARGET_RADIUS:
        # Scaling lag k by s^k scales the companion radius by exactly s.
        s = _TARGET_RADIUS * 0.999 / radius
        coeffs = coeffs * s ** np.arange(1, order + 1)[:, None, None]
    return coeffs


def _sparse_precision(rng: np.random.Generator, n: int, density: float) -> np.ndarray:
    C = np.eye(n)
    if density <= 0.0:
        return C
    for attempt in range(100):
        rows, cols = np.triu_indices(n, k=1)
        mask = rng.random(rows.size) < density
        vals = rng.uniform(0.15, 0.35, size=rows.size) * rng.choice(
            [-1.0, 1.0], size=rows.size
        )
        off = np.zeros((n, n))
        off[rows[mask], cols[mask]] = vals[mask]
        off = off + off.T
        cand = np.eye(n) - off
        if np.linalg.eigvalsh(cand)[0] > 0.1:
            return cand
        density *= 0.8
    raise NumericalError("could not draw a positive definite sparse precision")


def _draw_innovations(rng: np.random.Generator, n: int, T: int,
                      precision: np.ndarray, heavy_tails: bool) -> np.ndarray:
    cov = np.linalg.inv(precision)
    L = np.linalg.cholesky((cov + cov.T) / 2.0)
    z = rng.standard_normal((n, T))
    if heavy_tails:
        dof = 5.0
        chi = rng.chisquare(dof, size=T)
        z = z * np.sqrt(dof / chi)[None, :] * np.sqrt((dof - 2.0) / dof)
    return L @ z


def simulate(spec: DgpSpec) -> tuple[TimePanel, GroundTruth]:
    """Draw one panel from the specified process.

    Returns the panel and the ground truth bundle (loadings, factor series,
    VAR coefficients, innovation precision, and the exact common and
    idiosyncratic parts). Deterministic in the seed. Unstable draws are
    retried up to 100 times.
    """
    rng = np.random.default_rng(spec.seed)
    n, T, q = spec.n, spec.T, spec.q
    total = T + _BURN_IN

    factors = np.zeros((max(q, 1), T))
    loadings = np.zeros((n, max(q, 1)))
    common = np.zeros((n, T))
    if q > 0:
        ar = np.asarray(spec.factor_ar, dtype=float)
        if ar.size == 1:
            ar = np.repeat(ar, q)
        eps = rng.standard_normal((q, total))
        f = np.zeros((q, total))
        for t in range(1, total):
            f[:, t] = ar * f[:, t - 1] + eps[:, t]
        f = f[:, _BURN_IN:]
        f = f / f.std(axis=1, keepdims=True)
        loadings = rng.normal(spec.loading_scale, spec.loading_spread, size=(n, q))
        factors = f
        common = loadings @ factors

    for attempt in range(100):
        coeffs = _sparse_var_coefficients(rng, n, spec.idio_order, spec.idio_density)
        if companion_spectral_radius(coeffs) < _TARGET_RADIUS:
            break
    else:
        raise NumericalError("could not draw a stable sparse VAR")
    precision = _sparse_precision(rng, n, spec.precision_density)
    innov = _draw_innovations(rng, n, total, precision, spec.heavy_tails)
    idio = np.zeros((n, total))
    p = spec.idio_order
    for t in range(total):
        acc = innov[:, t].copy()
        for k in range(1, min(t, p) + 1):
            acc += coeffs[k - 1] @ idio[:, t - k]
        idio[:, t] = acc
    idio = idio[:, _BURN_IN:]

    if q > 0 and spec.variance_ratio > 0.0:
        var_common = float(common.var(axis=1).sum())
        var_idio = float(idio.var(axis=1).sum())
        if var_common > 0.0 and var_idio > 0.0:
            gamma = np.sqrt(spec.variance_ratio * var_idio / var_common)
            common *= gamma
            loadings = loadings * gamma

    values = common + idio
    panel = TimePanel(
        values=values,
        labels=tuple(f"s{i:03d}" for i in range(n)),
        timestamps=synthetic_timestamps(T),
    )
    truth = GroundTruth(
        loadings=loadings,
        factors=factors,
        var_coeffs=coeffs,
        precision=precision,
        common=common,
        idiosyncratic=idio,
        seed=spec.seed,
    )
    return panel, truth
