import numpy as np
import pytest

from volnet.errors import ConfigError
from volnet.datagen import DgpSpec, simulate
from volnet.panel import center
from volnet.spectral import dynamic_eigen, estimate_spectral_density
from volnet.sparsevar import companion_spectral_radius


class TestSimulate:
    def test_same_seed_identical_panels(self):
        spec = DgpSpec(n=10, T=300, q=1, idio_order=2, idio_density=0.1,
                       precision_density=0.1, seed=5)
        a, ta = simulate(spec)
        b, tb = simulate(spec)
        assert np.array_equal(a.values, b.values)
        assert np.array_equal(ta.var_coeffs, tb.var_coeffs)

    def test_variance_ratio_hit_within_one_percent(self):
        for target in (0.5, 1.0, 2.0):
            spec = DgpSpec(n=12, T=800, q=1, idio_order=1, idio_density=0.1,
                           precision_density=0.05, variance_ratio=target, seed=2)
            _, truth = simulate(spec)
            measured = truth.common.var(axis=1).sum() / truth.idiosyncratic.var(axis=1).sum()
            assert measured == pytest.approx(target, rel=0.01)

    def test_degenerate_spec_pure_factor_plus_noise(self):
        spec = DgpSpec(n=8, T=200, q=1, idio_order=0, idio_density=0.0,
                       precision_density=0.0, seed=3)
        panel, truth = simulate(spec)
        assert truth.var_coeffs.shape[0] == 0
        assert np.array_equal(truth.precision, np.eye(8))
        rebuilt = truth.loadings @ truth.factors + truth.idiosyncratic
        assert np.abs(rebuilt - panel.values).max() < 1e-12

    def test_stability_by_construction(self):
        for seed in range(5):
            spec = DgpSpec(n=15, T=100, q=0, idio_order=3, idio_density=0.3,
                           precision_density=0.0, seed=seed)
            _, truth = simulate(spec)
            assert companion_spectral_radius(truth.var_coeffs) < 0.95

    def test_heavy_tail_switch_changes_draws(self):
        base = DgpSpec(n=8, T=400, q=0, idio_order=0, precision_density=0.0, seed=4)
        heavy = DgpSpec(n=8, T=400, q=0, idio_order=0, precision_density=0.0,
                        heavy_tails=True, seed=4)
        a, _ = simulate(base)
        b, _ = simulate(heavy)
        assert not np.array_equal(a.values, b.values)
        assert np.abs(b.values).max() > np.abs(a.values).max()

    def test_validation(self):
        with pytest.raises(ConfigError):
            DgpSpec(n=1, T=100)
        with pytest.raises(ConfigError):
            DgpSpec(n=10, T=100, q=10)
        with pytest.raises(ConfigError):
            DgpSpec(n=10, T=100, idio_density=1.5)
        with pytest.raises(ConfigError):
            DgpSpec(n=10, T=100, factor_ar=(1.2,))


def test_idiosyncratic_top_eigenvalue_grows_sublinearly():
    # Bounded idiosyncratic spectra: doubling n should not double the top
    # dynamic eigenvalue.
    tops = {}
    for n in (20, 40, 80):
        spec = DgpSpec(n=n, T=600, q=0, idio_order=1, idio_density=2.0 / n,
                       precision_density=2.0 / n, seed=11)
        panel, _ = simulate(spec)
        sd = estimate_spectral_density(center(panel))
        eig = dynamic_eigen(sd, 0)
        tops[n] = float(eig.circle_means()[0])
    assert tops[40] / tops[20] < 1.6
    assert tops[80] / tops[40] < 1.6
