import numpy as np
import pytest

from volnet.errors import DataError
from volnet.datagen import DgpSpec, simulate
from volnet.identify import (
    eigenvector_centrality,
    estimate_pcn,
    order_and_choleski,
)

from conftest import make_panel, white_panel


def f1_score(est, true):
    tp = (est & true).sum()
    fp = (est & ~true).sum()
    fn = (~est & true).sum()
    return 2 * tp / max(2 * tp + fp + fn, 1)


class TestPcn:
    def test_independent_residuals_near_empty(self):
        densities = []
        for seed in range(3):
            pcn = estimate_pcn(white_panel(20, 2000, seed=seed))
            densities.append(pcn.edge_density())
        assert np.mean(densities) < 0.02

    def test_known_precision_support_recovery(self):
        hits = 0
        for seed in range(5):
            panel, truth = simulate(DgpSpec(n=20, T=2000, q=0, idio_order=0,
                                            idio_density=0.0, precision_density=0.05,
                                            seed=seed))
            pcn = estimate_pcn(panel)
            f1 = f1_score(pcn.weights != 0.0, truth.precision_support())
            hits += f1 >= 0.8
        assert hits >= 4

    def test_bivariate_partial_equals_correlation(self, rng):
        rho = 0.6
        L = np.linalg.cholesky([[1.0, rho], [rho, 1.0]])
        panel = make_panel(L @ rng.standard_normal((2, 2000)))
        pcn = estimate_pcn(panel)
        assert pcn.weights[0, 1] == pytest.approx(rho, abs=0.05)

    def test_symmetry_range_and_zero_diagonal(self):
        panel, _ = simulate(DgpSpec(n=15, T=1000, q=0, precision_density=0.1, seed=7))
        pcn = estimate_pcn(panel)
        assert np.array_equal(pcn.weights, pcn.weights.T)
        assert np.abs(pcn.weights).max() <= 1.0
        assert np.all(np.diag(pcn.weights) == 0.0)

    def test_and_rule_needs_both_directions(self):
        panel, _ = simulate(DgpSpec(n=15, T=1000, q=0, precision_density=0.1, seed=8))
        pcn = estimate_pcn(panel)
        # nonzero entries must be mirrored by construction
        nz = pcn.weights != 0.0
        assert np.array_equal(nz, nz.T)


class TestCentrality:
    def test_star_hub_first(self):
        W = np.zeros((5, 5))
        W[0, 1:] = 1.0
        W[1:, 0] = 1.0
        ranking = eigenvector_centrality(W)
        assert ranking.order[0] == 0
        assert ranking.scores[0] > ranking.scores[1]

    def test_complete_graph_ties_keep_input_order(self):
        W = np.ones((4, 4)) - np.eye(4)
        ranking = eigenvector_centrality(W)
        assert np.array_equal(ranking.order, np.arange(4))
        assert np.abs(ranking.scores - 0.25).max() < 1e-9

    def test_directed_left_eigenvector_by_hand(self):
        # W = [[0, 1], [2, 0]]: the left leading eigenvector solves
        # v' W = sqrt(2) v', i.e. v proportional to (sqrt(2), 1).
        W = np.array([[0.0, 1.0], [2.0, 0.0]])
        ranking = eigenvector_centrality(W, directed=True)
        expected = np.array([np.sqrt(2.0), 1.0])
        expected /= expected.sum()
        assert np.abs(ranking.scores - expected).max() < 1e-9
        assert ranking.order[0] == 0

    def test_directed_right_eigenvector_flag(self):
        W = np.array([[0.0, 1.0], [2.0, 0.0]])
        ranking = eigenvector_centrality(W, directed=True, use_left=False)
        expected = np.array([1.0, np.sqrt(2.0)])
        expected /= expected.sum()
        assert np.abs(ranking.scores - expected).max() < 1e-9
        assert ranking.order[0] == 1

    def test_scaling_leaves_order_unchanged(self, rng):
        W = np.abs(rng.standard_normal((8, 8)))
        np.fill_diagonal(W, 0.0)
        a = eigenvector_centrality(W, directed=True)
        b = eigenvector_centrality(173.5 * W, directed=True)
        assert np.array_equal(a.order, b.order)

    def test_signed_mode_ranks_by_magnitude(self):
        W = np.array([[0.0, -0.9, 0.1], [-0.9, 0.0, 0.1], [0.1, 0.1, 0.0]])
        ranking = eigenvector_centrality(W, mode="signed")
        assert set(ranking.order[:2]) == {0, 1}
        assert np.all(ranking.scores >= 0.0)

    def test_unsigned_scores_nonnegative(self, rng):
        W = rng.standard_normal((6, 6))
        ranking = eigenvector_centrality(W, mode="unsigned")
        assert ranking.scores.min() >= 0.0

    def test_zero_matrix_rejected(self):
        with pytest.raises(DataError):
            eigenvector_centrality(np.zeros((3, 3)))


class TestCholeski:
    def test_identity_covariance(self, rng):
        n, T = 4, 200_000
        panel = make_panel(rng.standard_normal((n, T)))
        ranking = eigenvector_centrality(np.ones((n, n)) - np.eye(n))
        chol = order_and_choleski(panel, ranking)
        assert np.abs(chol.R - np.eye(n)).max() < 0.02

    def test_two_by_two_hand_factor(self, rng):
        S = np.array([[1.0, 0.5], [0.5, 1.0]])
        X = np.linalg.cholesky(S) @ rng.standard_normal((2, 500))
        panel = make_panel(X)
        ranking = eigenvector_centrality(np.array([[0.0, 1.0], [1.0, 0.0]]))
        chol = order_and_choleski(panel, ranking)
        Xc = X - X.mean(axis=1, keepdims=True)
        emp = Xc @ Xc.T / X.shape[1]
        expected = np.linalg.cholesky(emp)
        assert np.abs(chol.R - expected).max() < 1e-12
        assert chol.R[0, 1] == 0.0

    def test_reconstruction_identity(self, rng):
        panel = make_panel(rng.standard_normal((6, 400)))
        ranking = eigenvector_centrality(np.abs(rng.standard_normal((6, 6))))
        chol = order_and_choleski(panel, ranking)
        X = panel.values[chol.permutation]
        Xc = X - X.mean(axis=1, keepdims=True)
        emp = Xc @ Xc.T / X.shape[1]
        assert np.abs(chol.R @ chol.R.T - emp).max() < 1e-10
        assert np.all(np.diag(chol.R) > 0.0)

    def test_bad_permutation_rejected(self, rng):
        from volnet.identify import CentralityRanking

        panel = make_panel(rng.standard_normal((3, 100)))
        ranking = CentralityRanking(
            scores=np.ones(3), order=np.array([0, 0, 2]), mode="unsigned",
            eigenvector=np.ones(3),
        )
        with pytest.raises(DataError):
            order_and_choleski(panel, ranking)
