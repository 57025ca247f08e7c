import numpy as np
import pytest

from volnet.errors import DataError, NumericalError
from volnet.identify import CholeskiFactor
from volnet.networks import (
    FevdMatrix,
    Network,
    VmaFilter,
    degrees,
    export_network,
    fevd,
    invert_var,
    lgcn,
    network_from_fevd,
    read_adjacency,
    threshold_lvdn,
)
from volnet.panel import SectorMap, synthetic_timestamps
from volnet.sparsevar import PenaltySpec, SparseVarModel, companion_spectral_radius

from conftest import make_panel, white_panel


def toy_model(coeffs, seed=0):
    coeffs = np.asarray(coeffs, dtype=float)
    n = coeffs.shape[1]
    rng = np.random.default_rng(seed)
    resid = make_panel(rng.standard_normal((n, 60)))
    return SparseVarModel(
        order=coeffs.shape[0],
        coeffs=coeffs,
        residuals=resid,
        residual_cov=np.eye(n),
        residual_precision=np.eye(n),
        row_lambdas=np.zeros(n),
        penalty=PenaltySpec(),
        labels=resid.labels,
    )


def identity_chol(n):
    return CholeskiFactor(R=np.eye(n), permutation=np.arange(n),
                          labels=tuple(f"s{i:03d}" for i in range(n)))


class TestInvertVar:
    def test_no_lags_returns_cholesky_only(self):
        model = toy_model(np.zeros((1, 3, 3)))
        R = np.tril(np.array([[1.0, 0, 0], [0.4, 0.9, 0], [0.1, 0.2, 0.8]]))
        chol = CholeskiFactor(R=R, permutation=np.arange(3), labels=model.labels)
        vma = invert_var(model, chol, horizon=4)
        assert np.array_equal(vma.coefficients[0], R)
        assert np.abs(vma.coefficients[1:]).max() == 0.0

    def test_scalar_geometric_series(self):
        coeffs = np.zeros((1, 2, 2))
        coeffs[0] = np.diag([0.5, 0.25])
        vma = invert_var(toy_model(coeffs), identity_chol(2), horizon=8)
        assert np.allclose(vma.coefficients[:, 0, 0], 0.5 ** np.arange(9))
        assert np.allclose(vma.coefficients[:, 1, 1], 0.25 ** np.arange(9))

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_simulated_impulse_responses(self, seed):
        rng = np.random.default_rng(seed)
        while True:
            p = int(rng.integers(1, 4))
            n = int(rng.integers(2, 6))
            A = rng.uniform(-0.5, 0.5, (p, n, n)) * (rng.random((p, n, n)) < 0.6)
            if companion_spectral_radius(A) < 0.95:
                break
        model = toy_model(A, seed=seed)
        S = rng.standard_normal((n, n))
        R = np.linalg.cholesky(S @ S.T + n * np.eye(n))
        chol = CholeskiFactor(R=R, permutation=np.arange(n), labels=model.labels)
        h = 12
        vma = invert_var(model, chol, horizon=h)
        for j in range(n):
            x = np.zeros((n, h + 1))
            for t in range(h + 1):
                acc = R[:, j].copy() if t == 0 else np.zeros(n)
                for s in range(1, min(t, p) + 1):
                    acc += A[s - 1] @ x[:, t - s]
                x[:, t] = acc
            assert np.abs(vma.coefficients[:, :, j].T - x).max() < 1e-10

    def test_unstable_model_rejected(self):
        coeffs = np.zeros((1, 2, 2))
        coeffs[0] = np.diag([1.01, 0.5])
        with pytest.raises(NumericalError, match="unstable"):
            invert_var(toy_model(coeffs), identity_chol(2), horizon=3)


class TestFevd:
    def test_identity_filter(self):
        vma = VmaFilter(np.eye(3)[None], 0, ("a", "b", "c"), ("a", "b", "c"))
        out = fevd(vma)
        assert np.array_equal(out.weights, 100.0 * np.eye(3))

    def test_two_by_two_equal_split(self):
        D0 = np.array([[1.0, 0.0], [1.0, 1.0]])
        out = fevd(VmaFilter(D0[None], 0, ("a", "b"), ("a", "b")))
        assert np.allclose(out.weights[1], [50.0, 50.0])

    def test_rows_sum_to_hundred(self, rng):
        D = rng.standard_normal((6, 5, 5))
        out = fevd(VmaFilter(D, 5, tuple("abcde"), tuple("abcde")))
        assert np.abs(out.weights.sum(axis=1) - 100.0).max() < 1e-8

    def test_all_zero_row_is_an_error(self):
        D = np.zeros((2, 3, 3))
        D[:, :2, :] = 1.0
        with pytest.raises(NumericalError, match="s002"):
            fevd(VmaFilter(D, 1, ("s000", "s001", "s002"), ("s000", "s001", "s002")))

    def test_scale_invariance_in_cholesky_factor(self):
        coeffs = np.zeros((1, 3, 3))
        coeffs[0] = [[0.3, 0.1, 0.0], [0.0, 0.2, 0.1], [0.1, 0.0, 0.25]]
        model = toy_model(coeffs)
        R = np.tril([[1.0, 0, 0], [0.3, 0.8, 0], [0.2, 0.1, 0.9]])
        base = fevd(invert_var(model, CholeskiFactor(R, np.arange(3), model.labels), 6))
        scaled = fevd(
            invert_var(model, CholeskiFactor(2.5 * R, np.arange(3), model.labels), 6)
        )
        assert np.abs(base.weights - scaled.weights).max() < 1e-10

    def test_permutation_round_trip_and_degree_coherence(self, rng):
        coeffs = np.zeros((1, 4, 4))
        coeffs[0] = rng.uniform(-0.3, 0.3, (4, 4))
        model = toy_model(coeffs)
        perm = np.array([2, 0, 3, 1])
        R = np.tril(rng.uniform(0.5, 1.0, (4, 4)))
        chol = CholeskiFactor(R, perm, tuple(np.array(model.labels)[perm]))
        permuted = fevd(invert_var(model, chol, 5))
        original = permuted.to_original_order()
        assert original.row_labels == model.labels
        inv = np.empty(4, dtype=int)
        inv[perm] = np.arange(4)
        d_perm = degrees(permuted)
        d_orig = degrees(original)
        assert np.abs(d_perm.from_degrees[inv] - d_orig.from_degrees).max() < 1e-12
        assert d_perm.total == pytest.approx(d_orig.total, abs=1e-12)


class TestLgcn:
    def test_zero_model_empty_network(self):
        net = lgcn(toy_model(np.zeros((2, 4, 4))))
        assert net.edge_density() == 0.0

    def test_density_counts_offdiagonal_pairs(self):
        coeffs = np.zeros((2, 3, 3))
        coeffs[0, 0, 1] = 0.5
        coeffs[1, 2, 0] = -0.2
        coeffs[0, 1, 1] = 0.9  # diagonal entries are not edges
        net = lgcn(toy_model(coeffs))
        assert net.edge_density() == pytest.approx(2.0 / 6.0)


class TestDegrees:
    def test_diagonal_fevd_no_connectedness(self):
        f = FevdMatrix(100.0 * np.eye(4), 1, tuple("abcd"), tuple("abcd"))
        rep = degrees(f)
        assert np.all(rep.from_degrees == 0.0)
        assert np.all(rep.to_degrees == 0.0)
        assert rep.total == 0.0

    def test_mean_from_equals_mean_to(self, rng):
        W = rng.random((6, 6))
        W = 100.0 * W / W.sum(axis=1, keepdims=True)
        rep = degrees(FevdMatrix(W, 5, tuple("abcdef"), tuple("abcdef")))
        assert rep.total == pytest.approx(rep.from_degrees.mean(), abs=1e-8)
        assert rep.total == pytest.approx(rep.to_degrees.mean(), abs=1e-8)

    def test_hand_example(self):
        W = FevdMatrix(np.array([[60.0, 40.0], [10.0, 90.0]]), 1, ("a", "b"), ("a", "b"))
        rep = degrees(W)
        assert np.array_equal(rep.from_degrees, [40.0, 10.0])
        assert np.array_equal(rep.to_degrees, [10.0, 40.0])
        assert rep.total == 25.0

    def test_sector_averages(self):
        W = FevdMatrix(np.array([[60.0, 40.0], [10.0, 90.0]]), 1, ("a", "b"), ("a", "b"))
        rep = degrees(W, SectorMap({"a": "fin", "b": "tech"}))
        assert rep.sector_from == {"fin": 40.0, "tech": 10.0}
        assert rep.sector_to == {"fin": 10.0, "tech": 40.0}


class TestThreshold:
    def _random_fevd(self, seed=0, n=8):
        rng = np.random.default_rng(seed)
        D = rng.standard_normal((4, n, n))
        return fevd(VmaFilter(D, 3, tuple(f"s{i}" for i in range(n)),
                              tuple(f"s{i}" for i in range(n))))

    def test_zero_threshold_keeps_everything(self):
        f = self._random_fevd()
        out = threshold_lvdn(f)
        idx = int(np.nonzero(out.tau_grid == 0.0)[0][0])
        assert out.density_curve[idx] == 1.0

    def test_huge_threshold_leaves_diagonal(self):
        f = self._random_fevd(1)
        W = f.weights.copy()
        off = W[~np.eye(W.shape[0], dtype=bool)]
        Wt = W.copy()
        Wt[~np.eye(W.shape[0], dtype=bool) & (W < off.max() + 1.0)] = 0.0
        assert np.count_nonzero(Wt - np.diag(np.diag(Wt))) == 0

    def test_density_non_increasing_in_tau(self):
        out = threshold_lvdn(self._random_fevd(2))
        order = np.argsort(out.tau_grid)
        assert np.all(np.diff(out.density_curve[order]) <= 1e-12)

    def test_default_objective_vanishes_at_zero(self):
        out = threshold_lvdn(self._random_fevd(3))
        idx = int(np.nonzero(out.tau_grid == 0.0)[0][0])
        assert out.objective_curve[idx] < 1e-10
        assert out.tau == out.tau_grid[np.argmin(out.objective_curve)]

    def test_decorrelate_objective_selects_interior(self):
        out = threshold_lvdn(self._random_fevd(4), objective="decorrelate")
        assert out.tau_grid.min() <= out.tau <= out.tau_grid.max()
        assert np.all(out.thresholded[out.thresholded != 0.0] >= 0.0)

    def test_thresholded_entries_zero_or_original(self):
        f = self._random_fevd(5)
        out = threshold_lvdn(f, objective="decorrelate")
        mask = out.thresholded != 0.0
        assert np.array_equal(out.thresholded[mask], f.weights[mask])


class TestExports:
    def test_empty_network_header_only(self, tmp_path):
        net = Network(np.zeros((2, 2)), ("a", "b"), "LVDN")
        path = export_network(net, tmp_path / "edges.csv", "edges")
        assert path.read_text().strip() == "source,target,weight"

    def test_single_edge_single_row(self, tmp_path):
        adj = np.zeros((2, 2))
        adj[0, 1] = 2.5
        net = Network(adj, ("a", "b"), "LVDN")
        lines = export_network(net, tmp_path / "e.csv", "edges").read_text().splitlines()
        assert lines == ["source,target,weight", "a,b,2.5"]

    def test_adjacency_round_trip_identity(self, tmp_path, rng):
        adj = rng.standard_normal((5, 5))
        net = Network(adj, tuple(f"n{i}" for i in range(5)), "LGCN")
        path = export_network(net, tmp_path / "adj.csv", "adjacency")
        back = read_adjacency(path, kind="LGCN")
        assert np.array_equal(back.adjacency, adj)
        assert back.labels == net.labels

    def test_gexf_contains_nodes_edges_and_sectors(self, tmp_path):
        adj = np.array([[0.0, 1.0], [0.0, 0.0]])
        net = Network(adj, ("a", "b"), "LVDN", sectors=("fin", "tech"))
        text = export_network(net, tmp_path / "n.gexf", "gexf").read_text()
        assert "<node id=\"0\" label=\"a\">" in text
        assert "fin" in text and "tech" in text
        assert "edge id=\"0\"" in text
        assert "from_degree" in text

    def test_network_from_fevd_is_original_order(self, rng):
        W = rng.random((3, 3))
        W = 100.0 * W / W.sum(axis=1, keepdims=True)
        perm = np.array([1, 2, 0])
        labels = ("b", "c", "a")
        f = FevdMatrix(W, 5, labels, labels, permutation=perm)
        net = network_from_fevd(f)
        assert net.labels == ("a", "b", "c")
