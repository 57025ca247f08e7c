import numpy as np
import pytest

from volnet.panel import TimePanel, synthetic_timestamps


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_panel(values, labels=None, sectors=None, start="2000-01-03"):
    values = np.asarray(values, dtype=float)
    n, T = values.shape
    labels = labels or tuple(f"s{i:03d}" for i in range(n))
    return TimePanel(
        values=values,
        labels=labels,
        timestamps=synthetic_timestamps(T, start),
        sectors=sectors,
    )


def white_panel(n, T, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    return make_panel(scale * rng.standard_normal((n, T)))


def stoch_vol_panel(n, T, seed=0, vol_innov=0.7, sectors=None):
    """Returns panel with one level factor and one common volatility factor.

    A common log-volatility AR(1) process scales both the factor innovations
    and the idiosyncratic innovations, so the log squared shocks of both
    steps share a single volatility factor.
    """
    rng = np.random.default_rng(seed)
    total = T + 200
    s = np.zeros(total)
    eps_s = rng.standard_normal(total)
    for t in range(1, total):
        s[t] = 0.9 * s[t - 1] + vol_innov * eps_s[t]
    vol = np.exp(0.5 * s)
    f = np.zeros(total)
    eps_f = rng.standard_normal(total)
    for t in range(1, total):
        f[t] = 0.6 * f[t - 1] + vol[t] * eps_f[t]
    loadings = rng.normal(1.0, 0.3, n)
    idio = vol[None, :] * rng.standard_normal((n, total))
    values = (np.outer(loadings, f) + idio)[:, 200:]
    return make_panel(values, sectors=sectors)
