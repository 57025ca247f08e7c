"""Multivariate spectral density estimation and frequency-domain transforms.

The estimator is the lag-window (triangular kernel) form of the smoothed
periodogram,

    S(theta_h) = (1/2pi) * sum_{|k| < B} (1 - |k|/B) * G_k * exp(-i k theta_h),

with G_k the (1/T)-normalized sample autocovariances and theta_h = pi*h/M
for h = 0..M. Negative frequencies are never stored: S(-theta) is the
complex conjugate of S(theta) for real panels. The 1/(2pi) normalization
makes the integrated spectrum equal the variance.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericalError
from .panel import TimePanel

__all__ = [
    "SpectralDensity",
    "DynamicEigenStructure",
    "AutocovarianceSequence",
    "PscField",
    "estimate_spectral_density",
    "dynamic_eigen",
    "common_spectrum_projection",
    "autocovariances",
    "partial_spectral_coherence",
    "sample_autocovariances",
]

_HERMITIAN_TOL = 1e-10
_PSD_TOL = -1e-8
_MEMORY_LIMIT_BYTES = 4 * 1024**3


@dataclass(frozen=True)
class SpectralDensity:
    """Spectral density matrices on the nonnegative half grid.

    Attributes:
        matrices: (M+1, n, n) complex Hermitian stack, entry h is S(pi*h/M).
        grid_size: M, so the full grid is theta_h = pi*h/M, h = -M..M.
        bandwidth: lag-window truncation point used in estimation.
        n_obs: sample size behind the estimate (None for analytic inputs).
    """

    matrices: np.ndarray
    grid_size: int
    bandwidth: int
    n_obs: int | None = None
    labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        mats = np.ascontiguousarray(np.asarray(self.matrices, dtype=complex))
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
            raise DataError(f"expected (M+1, n, n) matrices, got {mats.shape}")
        if mats.shape[0] != self.grid_size + 1:
            raise DataError(
                f"{mats.shape[0]} matrices for grid_size {self.grid_size}"
            )
        scale = max(float(np.max(np.abs(mats))), 1.0)
        herm_gap = float(np.max(np.abs(mats - mats.conj().transpose(0, 2, 1))))
        if herm_gap > _HERMITIAN_TOL * scale:
            raise DataError(f"matrices not Hermitian (gap {herm_gap:.3e})")
        object.__setattr__(self, "matrices", mats)

    @property
    def n_series(self) -> int:
        return self.matrices.shape[1]

    @property
    def frequencies(self) -> np.ndarray:
        """theta_h = pi*h/M for h = 0..M."""
        return np.pi * np.arange(self.grid_size + 1) / self.grid_size

    def at(self, h: int) -> np.ndarray:
        """Matrix at signed grid index h in -M..M (negatives by conjugation)."""
        if abs(h) > self.grid_size:
            raise DataError(f"grid index {h} outside -M..M")
        return self.matrices[h] if h >= 0 else self.matrices[-h].conj()

    def validate_psd(self, tol: float = _PSD_TOL) -> float:
        """Return the minimum eigenvalue over the grid; raise if below tol*scale."""
        evs = np.linalg.eigvalsh(self.matrices)
        lo = float(evs.min())
        scale = max(float(evs.max()), 1.0)
        if lo < tol * scale:
            raise NumericalError(f"spectral density not PSD (min eigenvalue {lo:.3e})")
        return lo


@dataclass(frozen=True)
class DynamicEigenStructure:
    """Per-frequency eigenvalues (sorted decreasing) and leading eigenvectors."""

    eigenvalues: np.ndarray  # (M+1, n) real, decreasing along axis 1
    eigenvectors: np.ndarray  # (M+1, n, q) complex
    grid_size: int

    @property
    def n_series(self) -> int:
        return self.eigenvalues.shape[1]

    def circle_means(self) -> np.ndarray:
        """Eigenvalue means over the full circle theta in (-pi, pi].

        The stored half grid h = 0..M covers the circle once h = 0 and h = M
        get weight 1 and interior points weight 2 (conjugate frequencies share
        eigenvalues).
        """
        w = np.full(self.grid_size + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return (w[:, None] * self.eigenvalues).sum(axis=0) / (2.0 * self.grid_size)


@dataclass(frozen=True)
class AutocovarianceSequence:
    """Lag 0..L autocovariance matrices, Gamma_{-k} = Gamma_k'."""

    gammas: np.ndarray  # (L+1, n, n) real
    n_obs: int | None = None
    bandwidth: int | None = None
    labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        g = np.ascontiguousarray(np.asarray(self.gammas, dtype=float))
        if g.ndim != 3 or g.shape[1] != g.shape[2]:
            raise DataError(f"expected (L+1, n, n) array, got {g.shape}")
        scale = max(float(np.max(np.abs(g[0]))), 1e-300)
        if float(np.max(np.abs(g[0] - g[0].T))) > 1e-8 * scale:
            raise DataError("lag-0 autocovariance is not symmetric")
        object.__setattr__(self, "gammas", g)

    @property
    def max_lag(self) -> int:
        return self.gammas.shape[0] - 1

    @property
    def n_series(self) -> int:
        return self.gammas.shape[1]

    def at(self, k: int) -> np.ndarray:
        """Gamma_k for signed lag k."""
        if abs(k) > self.max_lag:
            raise DataError(f"lag {k} beyond stored maximum {self.max_lag}")
        return self.gammas[k] if k >= 0 else self.gammas[-k].T


@dataclass(frozen=True)
class PscField:
    """Partial spectral coherence matrices with unit diagonal."""

    matrices: np.ndarray  # (M+1, n, n) complex Hermitian
    grid_size: int
    regularized: bool = False

    @property
    def n_series(self) -> int:
        return self.matrices.shape[1]

    def at_frequency(self, theta: float) -> np.ndarray:
        """PSC matrix at the grid point closest to theta in [0, pi]."""
        h = int(round(theta / np.pi * self.grid_size))
        h = min(max(h, 0), self.grid_size)
        return self.matrices[h]


def dump_eigenvalue_curves(spec: SpectralDensity, path) -> None:
    """Debug dump: one line per frequency with all dynamic eigenvalues."""
    evals = np.linalg.eigvalsh(spec.matrices)[:, ::-1]
    header = "frequency," + ",".join(f"lambda_{i + 1}" for i in range(spec.n_series))
    np.savetxt(
        path,
        np.column_stack([spec.frequencies, evals]),
        delimiter=",",
        header=header,
        comments="",
    )


def sample_autocovariances(values: np.ndarray, max_lag: int) -> np.ndarray:
    """(1/T)-normalized sample autocovariances about the sample mean.

    Returns a (max_lag+1, n, n) stack with entry k equal to
    (1/T) * sum_t (x_t - xbar)(x_{t-k} - xbar)'.
    """
    x = np.asarray(values, dtype=float)
    n, T = x.shape
    if max_lag >= T:
        raise DataError(f"max_lag {max_lag} >= sample size {T}")
    xc = x - x.mean(axis=1, keepdims=True)
    out = np.empty((max_lag + 1, n, n))
    for k in range(max_lag + 1):
        out[k] = xc[:, k:] @ xc[:, : T - k].T / T
    return out


def estimate_spectral_density(
    panel: TimePanel,
    bandwidth: int | None = None,
    grid_size: int | None = None,
) -> SpectralDensity:
    """Lag-window spectral density estimate of a panel.

    Parameters
    ----------
    panel : TimePanel
        Input panel; row means are removed internally before the
        autocovariances are formed.
    bandwidth : int, optional
        Triangular-kernel truncation point B. Default floor(sqrt(T)).
    grid_size : int, optional
        M, giving frequencies pi*h/M for h = 0..M. Default 2*bandwidth.

    Returns
    -------
    SpectralDensity
        Hermitian matrices on the half grid, 1/(2pi) normalization.
    """
    T = panel.n_obs
    n = panel.n_series
    if bandwidth is None:
        bandwidth = int(np.floor(np.sqrt(T)))
    if grid_size is None:
        grid_size = 2 * bandwidth
    if bandwidth < 1 or grid_size < 1:
        raise DataError("bandwidth and grid_size must be positive")
    if bandwidth >= T:
        raise DataError(f"bandwidth {bandwidth} >= sample size {T}")
    if T <= 2 * bandwidth:
        raise DataError(f"need T > 2*bandwidth, got T={T}, bandwidth={bandwidth}")
    mem = (grid_size + 1) * n * n * 16
    if mem > _MEMORY_LIMIT_BYTES:
        raise DataError(
            f"grid of {grid_size + 1} matrices of size {n} needs {mem / 1e9:.1f} GB"
        )

    # Triangular weights vanish at |k| = B, so lags 0..B-1 carry the estimate.
    gammas = sample_autocovariances(panel.values, bandwidth - 1)
    lags = np.arange(1, bandwidth)
    weights = 1.0 - lags / bandwidth
    theta = np.pi * np.arange(grid_size + 1) / grid_size

    mats = np.broadcast_to(gammas[0] + 0j, (grid_size + 1, n, n)).copy()
    if bandwidth > 1:
        phase = np.exp(-1j * np.outer(theta, lags)) * weights  # (M+1, B-1)
        mats += np.einsum("hk,kab->hab", phase, gammas[1:], optimize=True)
        mats += np.einsum("hk,kba->hab", phase.conj(), gammas[1:], optimize=True)
    mats /= 2.0 * np.pi
    mats = (mats + mats.conj().transpose(0, 2, 1)) / 2.0

    return SpectralDensity(
        matrices=mats,
        grid_size=grid_size,
        bandwidth=bandwidth,
        n_obs=T,
        labels=panel.labels,
    )


def _fix_phases(vectors: np.ndarray) -> np.ndarray:
    """Rotate each eigenvector so its largest-modulus entry is real positive."""
    mods = np.abs(vectors)
    idx = mods.argmax(axis=1)  # (M+1, q)
    h_idx = np.arange(vectors.shape[0])[:, None]
    q_idx = np.arange(vectors.shape[2])[None, :]
    pivot = vectors[h_idx, idx, q_idx]  # (M+1, q)
    piv_mod = np.abs(pivot)
    piv_mod[piv_mod == 0.0] = 1.0
    return vectors * (pivot.conj() / piv_mod)[:, None, :]


def dynamic_eigen(spec: SpectralDensity, q: int) -> DynamicEigenStructure:
    """Per-frequency Hermitian eigendecomposition of a spectral density.

    Eigenvalues are returned sorted decreasing. The phase of each of the q
    requested eigenvectors is fixed so that their largest-modulus entry is
    real positive, making the decomposition deterministic.
    """
    n = spec.n_series
    if not 0 <= q <= n:
        raise DataError(f"q must be in 0..{n}, got {q}")
    evals, evecs = np.linalg.eigh(spec.matrices)
    evals = evals[:, ::-1]
    evecs = evecs[:, :, ::-1][:, :, :q]
    if q > 0:
        evecs = _fix_phases(evecs)
    return DynamicEigenStructure(
        eigenvalues=np.ascontiguousarray(evals),
        eigenvectors=np.ascontiguousarray(evecs),
        grid_size=spec.grid_size,
    )


def common_spectrum_projection(spec: SpectralDensity, q: int) -> SpectralDensity:
    """Rank-q spectral projection onto the leading dynamic principal components.

    Rebuilds each S(theta) from its q leading eigenpairs; tiny negative
    eigenvalues are clamped at zero so the output stays PSD.
    """
    n = spec.n_series
    if not 1 <= q < n:
        raise DataError(f"q must be in 1..{n - 1}, got {q}")
    eig = dynamic_eigen(spec, q)
    lam = np.clip(eig.eigenvalues[:, :q], 0.0, None)
    V = eig.eigenvectors
    mats = np.einsum("hik,hk,hjk->hij", V, lam, V.conj(), optimize=True)
    mats = (mats + mats.conj().transpose(0, 2, 1)) / 2.0
    return SpectralDensity(
        matrices=mats,
        grid_size=spec.grid_size,
        bandwidth=spec.bandwidth,
        n_obs=spec.n_obs,
        labels=spec.labels,
    )


def autocovariances(spec: SpectralDensity, max_lag: int) -> AutocovarianceSequence:
    """Autocovariances by inverse Fourier quadrature of a spectral density.

    Gamma_k = (pi/M) * sum over the full 2M-point grid of S(theta_h) e^{i k theta_h},
    evaluated from the stored half grid by conjugate symmetry. The quadrature
    is exact for spectra that are trigonometric polynomials of degree < 2M - k,
    which covers every lag-window estimate with bandwidth <= M.
    """
    M = spec.grid_size
    if not 0 <= max_lag <= M:
        raise DataError(f"max_lag must be in 0..{M}, got {max_lag}")
    mats = spec.matrices
    ks = np.arange(max_lag + 1)
    # Full-circle sum over h = -M..M-1: endpoints theta_0 and theta_-M once,
    # interior points twice via the real part.
    interior = mats[1:M]  # (M-1, n, n)
    phase = np.exp(1j * np.outer(ks, np.pi * np.arange(1, M) / M))  # (L+1, M-1)
    acc = 2.0 * np.einsum("kh,hab->kab", phase, interior, optimize=True).real
    acc += mats[0].real
    signs = np.where(ks % 2 == 0, 1.0, -1.0)
    acc += signs[:, None, None] * mats[M].real
    gammas = acc * (np.pi / M)

    # Interior imaginary parts cancel exactly against their conjugate
    # frequencies; only the endpoints theta = 0 and pi can leave a residue
    # (they do when the input is not the spectrum of a real process).
    imag_resid = (np.pi / M) * float(
        np.max(np.abs(mats[0].imag)) + np.max(np.abs(mats[M].imag))
    )
    if imag_resid > 1e-8 * max(1.0, float(np.max(np.abs(gammas)))):
        warnings.warn(f"imaginary residue {imag_resid:.3e} discarded in autocovariances")

    return AutocovarianceSequence(
        gammas=gammas, n_obs=spec.n_obs, bandwidth=spec.bandwidth, labels=spec.labels
    )


def partial_spectral_coherence(spec: SpectralDensity) -> PscField:
    """Partial spectral coherence from the inverse spectral density.

    With G(theta) = S(theta)^{-1}, the (i, j) entry for i != j is
    -g_ij / sqrt(g_ii * g_jj); the diagonal is set to 1. Frequencies whose
    minimum eigenvalue falls below 1e-10 are ridge-regularized by
    1e-8 * trace/n before inversion and the result is flagged.
    """
    mats = spec.matrices.copy()
    n = spec.n_series
    evs = np.linalg.eigvalsh(mats)
    bad = evs[:, 0] <= 1e-10
    regularized = bool(bad.any())
    if regularized:
        ridge = 1e-8 * np.einsum("hii->h", mats[bad]).real / n
        ridge = np.maximum(ridge, 1e-12)
        mats[bad] += ridge[:, None, None] * np.eye(n)
        if np.any(np.linalg.eigvalsh(mats[bad])[:, 0] <= 0.0):
            raise NumericalError("spectral density singular even after regularization")
    try:
        G = np.linalg.inv(mats)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"spectral density inversion failed: {exc}") from exc

    d = np.sqrt(np.abs(np.einsum("hii->hi", G).real))
    d[d == 0.0] = 1.0
    psc = -G / (d[:, :, None] * d[:, None, :])
    h_idx = np.arange(psc.shape[0])[:, None]
    diag = np.arange(n)
    psc[h_idx, diag, diag] = 1.0
    psc = (psc + psc.conj().transpose(0, 2, 1)) / 2.0
    return PscField(matrices=psc, grid_size=spec.grid_size, regularized=regularized)
