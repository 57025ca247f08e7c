"""Coordinate-descent kernels for penalized least squares on Gram matrices.

All kernels work on the normal-equation summary of one regression row:
G = X'X/T and b = X'y/T. The solved objective, in the variables the kernel
sees, is

    f(beta) = 0.5 * beta' G beta - b' beta
              + lam * sum_j l1w_j * |beta_j| + lam * sum_j rw_j * beta_j^2

which is (1/(2T)) * ||y - X beta||^2 plus the penalty, up to a constant.
Per-coordinate l1/ridge weight arrays let the callers express elastic net,
adaptive lasso and design standardization without separate kernels.
"""
from __future__ import annotations

import numpy as np
from numba import njit

__all__ = [
    "enet_path",
    "group_path",
    "ridge_gcv_path",
    "enet_kkt_violation",
    "group_kkt_violation",
]


@njit(cache=True, nogil=True)
def enet_path(G, b, lams, l1w, rw, max_sweeps, tol, record_objective):
    """Warm-started coordinate descent over a descending lambda grid.

    Returns (coefs (L, P), sweeps (L,), converged (L,), objectives (L, S))
    where objectives is filled per sweep only when record_objective is set.
    """
    P = G.shape[0]
    L = lams.shape[0]
    coefs = np.zeros((L, P))
    sweeps = np.zeros(L, np.int64)
    converged = np.zeros(L, np.uint8)
    if record_objective:
        objectives = np.full((L, max_sweeps), np.nan)
    else:
        objectives = np.full((1, 1), np.nan)

    beta = np.zeros(P)
    rho = np.zeros(P)  # G @ beta, maintained incrementally
    for li in range(L):
        lam = lams[li]
        for sweep in range(max_sweeps):
            delta_max = 0.0
            for j in range(P):
                gjj = G[j, j]
                denom = gjj + 2.0 * lam * rw[j]
                if denom <= 0.0:
                    continue
                z = b[j] - rho[j] + gjj * beta[j]
                thr = lam * l1w[j]
                if z > thr:
                    new = (z - thr) / denom
                elif z < -thr:
                    new = (z + thr) / denom
                else:
                    new = 0.0
                d = new - beta[j]
                if d != 0.0:
                    beta[j] = new
                    for k in range(P):
                        rho[k] += G[k, j] * d
                    ad = abs(d)
                    if ad > delta_max:
                        delta_max = ad
            sweeps[li] = sweep + 1
            if record_objective:
                val = 0.0
                for j in range(P):
                    val += 0.5 * beta[j] * rho[j] - b[j] * beta[j]
                    val += lam * (l1w[j] * abs(beta[j]) + rw[j] * beta[j] * beta[j])
                objectives[li, sweep] = val
            if delta_max < tol:
                converged[li] = 1
                break
        for j in range(P):
            coefs[li, j] = beta[j]
    return coefs, sweeps, converged, objectives


@njit(cache=True)
def _group_solve(Q, c, mu, kappa0):
    """Solve min 0.5 v'Qv - c'v + mu*||v|| for one group (nonzero branch).

    Fixed-point iteration on kappa = ||v||: v(kappa) = (Q + mu/kappa I)^{-1} c.
    """
    p = Q.shape[0]
    kappa = kappa0
    v = np.zeros(p)
    for _ in range(200):
        A = Q.copy()
        add = mu / kappa
        for i in range(p):
            A[i, i] += add
        v = np.linalg.solve(A, c)
        new_kappa = np.sqrt(np.dot(v, v))
        if new_kappa <= 0.0:
            return np.zeros(p)
        if abs(new_kappa - kappa) <= 1e-13 * (1.0 + new_kappa):
            kappa = new_kappa
            break
        kappa = new_kappa
    A = Q.copy()
    add = mu / kappa
    for i in range(p):
        A[i, i] += add
    return np.linalg.solve(A, c)


@njit(cache=True, nogil=True)
def group_path(G, b, lams, n_series, p, max_sweeps, tol, record_objective):
    """Block coordinate descent for the lag-group penalty.

    Columns follow the lag-major layout (lag k, series j) -> k*n_series + j,
    so group j collects the p lags of regressor series j. The group penalty
    is lam * sqrt(p) * sum_j ||beta_(j)||_2 on the kernel's coordinates.
    """
    P = G.shape[0]
    L = lams.shape[0]
    coefs = np.zeros((L, P))
    sweeps = np.zeros(L, np.int64)
    converged = np.zeros(L, np.uint8)
    if record_objective:
        objectives = np.full((L, max_sweeps), np.nan)
    else:
        objectives = np.full((1, 1), np.nan)

    beta = np.zeros(P)
    rho = np.zeros(P)
    sqp = np.sqrt(p)
    diag_mean = 0.0
    for j in range(P):
        diag_mean += G[j, j]
    diag_mean = max(diag_mean / P, 1e-300)

    Q = np.empty((p, p))
    c = np.empty(p)
    old = np.empty(p)
    for li in range(L):
        lam = lams[li]
        mu = lam * sqp
        for sweep in range(max_sweeps):
            delta_max = 0.0
            for g in range(n_series):
                for a in range(p):
                    ja = a * n_series + g
                    old[a] = beta[ja]
                    for bb in range(p):
                        Q[a, bb] = G[ja, bb * n_series + g]
                for a in range(p):
                    ja = a * n_series + g
                    acc = b[ja] - rho[ja]
                    for bb in range(p):
                        acc += Q[a, bb] * old[bb]
                    c[a] = acc
                cnorm = np.sqrt(np.dot(c, c))
                if cnorm <= mu:
                    new = np.zeros(p)
                else:
                    kappa0 = max((cnorm - mu) / diag_mean, 1e-12)
                    new = _group_solve(Q, c, mu, kappa0)
                changed = False
                for a in range(p):
                    if new[a] != old[a]:
                        changed = True
                        break
                if changed:
                    for a in range(p):
                        ja = a * n_series + g
                        d = new[a] - old[a]
                        if d != 0.0:
                            beta[ja] = new[a]
                            for k in range(P):
                                rho[k] += G[k, ja] * d
                            ad = abs(d)
                            if ad > delta_max:
                                delta_max = ad
            sweeps[li] = sweep + 1
            if record_objective:
                val = 0.0
                for j in range(P):
                    val += 0.5 * beta[j] * rho[j] - b[j] * beta[j]
                for g in range(n_series):
                    ss = 0.0
                    for a in range(p):
                        bj = beta[a * n_series + g]
                        ss += bj * bj
                    val += mu * np.sqrt(ss)
                objectives[li, sweep] = val
            if delta_max < tol:
                converged[li] = 1
                break
        for j in range(P):
            coefs[li, j] = beta[j]
    return coefs, sweeps, converged, objectives


def ridge_gcv_path(G, B, yss, n_obs, kappas):
    """Ridge solutions for every response column of B with GCV selection.

    Parameters
    ----------
    G : (P, P) Gram matrix X'X/T.
    B : (P, R) cross products X'Y/T, one column per response.
    yss : (R,) mean squared responses y'y/T.
    n_obs : effective sample size T.
    kappas : candidate ridge strengths (added to G).

    Returns
    -------
    (P, R) coefficients at the per-column GCV minimum, and the (R,) chosen
    strengths.
    """
    evals, V = np.linalg.eigh(G)
    evals = np.clip(evals, 0.0, None)
    Bt = V.T @ B  # (P, R)
    best = np.full(B.shape[1], np.inf)
    best_coef = np.zeros_like(B)
    best_kappa = np.zeros(B.shape[1])
    for kappa in kappas:
        denom = evals + kappa
        bt = Bt / denom[:, None]
        df = float(np.sum(evals / denom))
        rss = yss - 2.0 * np.einsum("pr,pr->r", Bt, bt) + np.einsum(
            "p,pr,pr->r", evals, bt, bt
        )
        gcv = rss / max(1.0 - df / n_obs, 1e-8) ** 2
        take = gcv < best
        if take.any():
            best[take] = gcv[take]
            best_kappa[take] = kappa
            coef = V @ bt
            best_coef[:, take] = coef[:, take]
    return best_coef, best_kappa


def enet_kkt_violation(G, b, beta, lam, l1w, rw):
    """Max KKT violation for the coordinate-wise penalties.

    Zero coordinates must satisfy |smooth gradient| <= lam * l1w_j; nonzero
    coordinates must satisfy the stationarity equation. Returns the largest
    absolute violation across coordinates.
    """
    grad = G @ beta - b + 2.0 * lam * rw * beta
    worst = 0.0
    for j in range(beta.size):
        if beta[j] == 0.0:
            worst = max(worst, abs(grad[j]) - lam * l1w[j])
        else:
            worst = max(worst, abs(grad[j] + lam * l1w[j] * np.sign(beta[j])))
    return worst


def group_kkt_violation(G, b, beta, lam, n_series, p):
    """Max KKT violation for the lag-group penalty (lag-major layout)."""
    grad = G @ beta - b
    mu = lam * np.sqrt(p)
    worst = 0.0
    for g in range(n_series):
        idx = np.arange(p) * n_series + g
        bg = beta[idx]
        gg = grad[idx]
        norm = np.linalg.norm(bg)
        if norm == 0.0:
            worst = max(worst, np.linalg.norm(gg) - mu)
        else:
            worst = max(worst, float(np.linalg.norm(gg + mu * bg / norm)))
    return worst
