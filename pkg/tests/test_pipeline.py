import json

import numpy as np
import pytest

from volnet.errors import ConfigError, DataError
from volnet.datagen import DgpSpec, simulate
from volnet.factors import BlockVarModel, FactorLoadings, common_lvdn_filter
from volnet.panel import SectorMap, TimePanel, center, synthetic_timestamps
from volnet.pipeline import (
    PipelineConfig,
    STAGES,
    joint_block_q,
    portmanteau_whiteness,
    run_pipeline,
    sectoral_common_shares,
    volatility_proxies,
    write_bundle,
)

from conftest import make_panel, white_panel


def two_block_panels(n, T, shared, seed):
    """Sigma/omega style proxy panels driven by one factor each."""
    rng = np.random.default_rng(seed)
    total = T + 100

    def ar1(phi=0.7):
        x = np.zeros(total)
        eps = rng.standard_normal(total)
        for t in range(1, total):
            x[t] = phi * x[t - 1] + eps[t]
        return x[100:] / x[100:].std()

    f1 = ar1()
    f2 = f1 if shared else ar1()
    load_a = rng.normal(1.0, 0.3, n)
    load_b = rng.normal(1.0, 0.3, n)
    a = np.outer(load_a, f1) + rng.standard_normal((n, T))
    b = np.outer(load_b, f2) + rng.standard_normal((n, T))
    ts = synthetic_timestamps(T)
    return (
        TimePanel(a, tuple(f"a{i}" for i in range(n)), ts),
        TimePanel(b, tuple(f"b{i}" for i in range(n)), ts),
    )


class TestVolatilityProxies:
    def test_log_square_values(self):
        ts = synthetic_timestamps(3)
        eta = TimePanel(np.array([[1.0, np.e**0.5, 2.0], [1.0, 1.0, 1.0]]),
                        ("x", "y"), ts)
        v = TimePanel(np.array([[1.0, 1.0, 1.0], [3.0, 1.0, 1.0]]), ("x", "y"), ts)
        out = volatility_proxies(eta, v)
        assert out.sigma_panel.values[0, 0] == pytest.approx(0.0)
        assert out.sigma_panel.values[0, 1] == pytest.approx(1.0)
        assert out.omega_panel.values[1, 0] == pytest.approx(np.log(9.0))

    def test_zero_shock_floored_and_counted(self):
        ts = synthetic_timestamps(3)
        eta = TimePanel(np.array([[0.0, 1.0, 1.0], [1.0, 1.0, 1.0]]), ("x", "y"), ts)
        v = TimePanel(np.ones((2, 3)), ("x", "y"), ts)
        out = volatility_proxies(eta, v)
        assert out.sigma_panel.values[0, 0] == pytest.approx(np.log(1e-16))
        assert out.sigma_floor_count[0] == 1
        assert out.sigma_floor_count[1] == 0

    def test_alignment_on_common_dates(self):
        eta = TimePanel(np.ones((2, 6)), ("x", "y"), synthetic_timestamps(6))
        v = TimePanel(np.ones((2, 4)), ("x", "y"), synthetic_timestamps(6)[2:])
        out = volatility_proxies(eta, v)
        assert out.sigma_panel.n_obs == 4
        assert np.array_equal(out.sigma_panel.timestamps, out.omega_panel.timestamps)


class TestJointBlockQ:
    def test_shared_factor_counts(self):
        hits = 0
        for seed in range(4):
            a, b = two_block_panels(20, 1500, shared=True, seed=seed)
            counts = joint_block_q(center(a), center(b), q_max=3)
            hits += counts.as_tuple() == (1, 1, 1)
        assert hits >= 3

    def test_independent_factors_double_joint_count(self):
        hits = 0
        for seed in range(4):
            a, b = two_block_panels(20, 1500, shared=False, seed=seed + 20)
            counts = joint_block_q(center(a), center(b), q_max=3)
            hits += counts.joint.q == 2
        assert hits >= 3

    def test_mismatched_lengths_rejected(self):
        a = white_panel(4, 100, seed=0)
        b = white_panel(4, 90, seed=1)
        with pytest.raises(DataError):
            joint_block_q(a, b, q_max=2)


class TestSectoralShares:
    def _filter(self, loadings, horizon=4):
        n = loadings.shape[0]
        model = BlockVarModel(
            blocks=[np.arange(i, i + 2) for i in range(0, n, 2)],
            coeffs=[np.zeros((0, 2, 2)) for _ in range(n // 2)],
            orders=[0] * (n // 2),
            shrunk=[False] * (n // 2),
            labels=tuple(f"s{i:03d}" for i in range(n)),
        )
        fl = FactorLoadings(H=loadings.reshape(-1, 1), u=np.zeros((1, 10)),
                            K=np.eye(1), labels=model.labels,
                            timestamps=synthetic_timestamps(10))
        return common_lvdn_filter(model, fl, horizon, K=np.eye(1))

    def test_uniform_loadings_equal_shares(self):
        n = 90
        vma = self._filter(np.ones(n))
        sectors = SectorMap({f"s{i:03d}": f"sector{i % 10}" for i in range(n)})
        table = sectoral_common_shares(vma, sectors)
        assert all(v == pytest.approx(10.0, abs=1e-10) for v in table.shares.values())

    def test_zero_sector_gets_zero_share(self):
        loadings = np.ones(6)
        loadings[:2] = 0.0
        vma = self._filter(loadings)
        sectors = SectorMap({"s000": "dead", "s001": "dead", "s002": "x",
                             "s003": "x", "s004": "y", "s005": "y"})
        table = sectoral_common_shares(vma, sectors)
        assert table.shares["dead"] == 0.0
        assert table.column_sum() == pytest.approx(100.0, abs=1e-8)

    def test_column_sums_to_hundred(self, rng):
        vma = self._filter(rng.normal(1.0, 0.5, 10))
        sectors = SectorMap({f"s{i:03d}": ("a" if i < 4 else "b") for i in range(10)})
        table = sectoral_common_shares(vma, sectors)
        assert table.column_sum() == pytest.approx(100.0, abs=1e-8)

    def test_multi_shock_filter_rejected(self, rng):
        from volnet.networks import VmaFilter

        vma = VmaFilter(rng.standard_normal((3, 4, 2)), 2,
                        tuple("abcd"), ("u1", "u2"))
        with pytest.raises(DataError):
            sectoral_common_shares(vma, SectorMap({"a": "x", "b": "x", "c": "y", "d": "y"}))


class TestWhiteness:
    def test_white_noise_passes(self):
        pvals = [portmanteau_whiteness(white_panel(8, 1500, seed=s))[2] for s in range(4)]
        assert np.median(pvals) > 0.05

    def test_autocorrelated_panel_rejected(self):
        panel, _ = simulate(DgpSpec(n=8, T=1500, q=0, idio_order=1,
                                    idio_density=0.4, precision_density=0.0, seed=1))
        stat, df, pval = portmanteau_whiteness(panel)
        assert pval < 0.01
        assert df == 8 * 8 * 5


@pytest.fixture(scope="module")
def result():
    from conftest import stoch_vol_panel

    sectors = tuple(f"sector{i % 4}" for i in range(20))
    panel = stoch_vol_panel(20, 2000, seed=42, sectors=sectors)
    config = PipelineConfig(p_grid=(1, 2), lambda_grid_size=8, jobs=2)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return run_pipeline(panel, config), panel, config


class TestRunPipeline:

    def test_factor_counts(self, result):
        res, _, _ = result
        assert res.q_level == 1
        assert res.q_vol == 1
        assert res.vol_counts.as_tuple() == (1, 1, 1)

    def test_every_fevd_row_normalized(self, result):
        res, _, _ = result
        assert np.abs(res.omega_fevd.weights.sum(axis=1) - 100.0).max() < 1e-8

    def test_reconstruction_identities(self, result):
        res, panel, _ = result
        # level split reconstructs the centered returns
        level = res.level_split
        rebuilt = level.common.values + level.idiosyncratic.values
        assert np.abs(rebuilt - center(panel).values).max() < 1e-12
        # volatility splits reconstruct the (sliced) centered proxies
        for split, source in ((res.sigma_split, res.sigma_centered),
                              (res.omega_split, res.omega_centered)):
            skip = source.n_obs - split.common.n_obs
            target = source.values[:, skip:]
            rebuilt = split.common.values + split.idiosyncratic.values
            assert np.abs(rebuilt - target).max() < 1e-12

    def test_market_shock_sign_convention(self, result):
        res, _, _ = result
        keep = min(
            res.sigma_split.common.n_obs - res.sigma_split.burn_in,
            res.omega_split.common.n_obs - res.omega_split.burn_in,
        )
        avg = np.vstack([
            res.sigma_split.common.values[:, -keep:],
            res.omega_split.common.values[:, -keep:],
        ]).mean(axis=0)
        shock = res.market_shock[0][-keep:]
        corr = np.corrcoef(shock, avg)[0, 1]
        assert corr > 0.0

    def test_d0_lower_triangular(self, result):
        res, _, _ = result
        D0 = res.omega_vma.coefficients[0]
        assert np.allclose(D0, np.tril(D0))

    def test_sectoral_tables_present_with_sectors(self, result):
        res, _, _ = result
        if res.q_vol == 1:
            assert res.sigma_shares is not None
            assert res.sigma_shares.column_sum() == pytest.approx(100.0, abs=1e-8)

    def test_stage_timings_cover_all_stages(self, result):
        res, _, _ = result
        assert set(res.stage_seconds) == set(STAGES)

    def test_determinism(self, result):
        res, panel, config = result
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            again = run_pipeline(panel, config)
        assert np.array_equal(res.omega_fevd.weights, again.omega_fevd.weights)
        assert np.array_equal(res.market_shock, again.market_shock)
        assert res.variance_shares == again.variance_shares

    def test_bundle_written(self, result, tmp_path):
        res, panel, _ = result
        out = write_bundle(res, tmp_path / "bundle", input_panel=panel)
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["q_level"] == res.q_level
        assert (out / "panels" / "omega_idio.csv.gz").exists()
        assert (out / "networks" / "lvdn_omega_adjacency.csv").exists()
        assert (out / "tables" / "degrees.csv").exists()
        assert (out / "tables" / "sectoral_shares.csv").exists()


def test_config_validation():
    with pytest.raises(ConfigError):
        PipelineConfig(penalty="scad").penalty_spec()
