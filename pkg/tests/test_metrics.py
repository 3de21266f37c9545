import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mnlrank.graphs import complete_graph, laplacian, line_graph
from mnlrank.linalg import laplacian_power
from mnlrank.metrics import (
    ErrorReport,
    borda,
    graph_bound_rhs,
    l_rmse,
    lq_radius,
    predict_winners,
    prediction_error,
    psi,
    rmse,
    sigma_tail,
)
from mnlrank.sampling import KWiseRankings, PairwiseComparisons


class TestRmse:
    def test_examples(self):
        A = np.random.default_rng(0).normal(size=(3, 4))
        assert rmse(A, A) == 0
        assert rmse(A + 1, A) == pytest.approx(1.0)

    def test_brute_force(self):
        rng = np.random.default_rng(1)
        A, B = rng.normal(size=(2, 5, 7))
        brute = math.sqrt(sum((a - b) ** 2 for a, b in zip(A.ravel(), B.ravel())) / 35)
        assert rmse(A, B) == pytest.approx(brute, rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            rmse(np.zeros((2, 3)), np.zeros((3, 2)))


class TestLRmse:
    H = laplacian_power(laplacian(line_graph(5)), 0.5, 1)

    def test_zero_and_row_constant(self):
        A = np.random.default_rng(2).normal(size=(3, 5))
        assert l_rmse(A, A, self.H) == 0
        assert l_rmse(A + np.array([[1.0], [2.0], [-3.0]]), A, self.H) < 1e-12

    def test_eigendecomposition(self):
        rng = np.random.default_rng(3)
        A, B = rng.normal(size=(2, 3, 5))
        w, Q = np.linalg.eigh(laplacian(line_graph(5)))
        H = (Q * np.sqrt(np.clip(w, 0, None))) @ Q.T
        assert l_rmse(A, B, self.H) == pytest.approx(np.linalg.norm((A - B) @ H) / math.sqrt(3), rel=1e-8)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_shift_invariance(self, seed):
        rng = np.random.default_rng(seed)
        A, B = rng.normal(size=(2, 4, 5))
        shift = rng.normal(size=(4, 1))
        H = laplacian_power(laplacian(complete_graph(5)), 0.5, 1)
        assert abs(l_rmse(A + shift, B, H) - l_rmse(A, B, H)) <= 1e-12


class TestBorda:
    def test_first_place(self):
        data = KWiseRankings([0, 1], [[0, 1, 2], [0, 2, 1]], [[0, 1, 2], [0, 1, 2]])
        s = borda(data)
        assert np.argmin(s) == 0

    def test_single_ranking_reproduced(self):
        data = KWiseRankings([0], [[3, 1, 0, 2]], [[2, 0, 3, 1]])
        s = borda(data)
        np.testing.assert_array_equal(np.argsort(s), data.ordered_items()[0])

    def test_reversal(self):
        rng = np.random.default_rng(4)
        items = np.array([rng.permutation(6) for _ in range(9)])
        ranking = np.tile(np.arange(6), (9, 1))
        fwd = borda(KWiseRankings(np.arange(9), items, ranking))
        rev = borda(KWiseRankings(np.arange(9), items, ranking[:, ::-1]))
        np.testing.assert_allclose(fwd + rev, 5.0)

    def test_unseen_items_and_empty(self):
        s = borda(KWiseRankings([0], [[0, 1]], [[1, 0]]), d2=4)
        assert np.isinf(s[2]) and np.isinf(s[3])
        with pytest.raises(ValueError):
            borda(KWiseRankings(np.zeros(0, int), np.zeros((0, 2), int), np.zeros((0, 2), int)))


class TestPrediction:
    def _heldout(self, n=2000, d=10, seed=5):
        rng = np.random.default_rng(seed)
        a = rng.integers(d, size=n)
        b = (a + rng.integers(1, d, size=n)) % d
        truth = np.arange(d)[::-1].astype(float)
        return truth, PairwiseComparisons(np.zeros(n, int), a, b, truth[a] > truth[b])

    def test_perfect_and_anti(self):
        truth, held = self._heldout()
        assert prediction_error(truth, held) == 0
        assert prediction_error(-truth, held) == 1
        assert prediction_error(truth, held, higher_is_better=False) == 1

    def test_random_scores(self):
        truth, held = self._heldout(n=20000)
        err = prediction_error(np.random.default_rng(6).normal(size=10), held)
        # a single random score vector is one draw from a permutation distribution
        assert 0.2 < err < 0.8
        errs = [prediction_error(np.random.default_rng(s).normal(size=10), held) for s in range(200)]
        assert np.mean(errs) == pytest.approx(0.5, abs=0.03)

    def test_ties_to_smaller_index(self):
        assert list(predict_winners(np.zeros(3), None, np.array([0, 2]), np.array([1, 1]))) == [True, False]

    def test_matrix_scores(self):
        S = np.array([[1.0, 0.0], [0.0, 1.0]])
        assert list(predict_winners(S, np.array([0, 1]), np.array([0, 0]), np.array([1, 1]))) == [True, False]

    def test_empty(self):
        with pytest.raises(ValueError):
            prediction_error(np.zeros(2), PairwiseComparisons([], [], [], []))


class TestSpectralDiagnostics:
    def test_exact_rank_tail(self):
        rng = np.random.default_rng(7)
        M = rng.normal(size=(8, 3)) @ rng.normal(size=(3, 9))
        assert sigma_tail(M, 3) <= 1e-9
        tails = [sigma_tail(M, r) for r in range(9)]
        assert all(a >= b for a, b in zip(tails, tails[1:]))
        with pytest.raises(ValueError):
            sigma_tail(M, 9)

    def test_lq_radius(self):
        M = np.random.default_rng(8).normal(size=(4, 4))
        assert lq_radius(M, 1) == pytest.approx(np.linalg.svd(M, compute_uv=False).sum())
        assert lq_radius(np.diag([3.0, 1.0]), 0.5) == pytest.approx(math.sqrt(3) + 1)
        with pytest.raises(ValueError):
            lq_radius(M, 0)

    def test_psi(self):
        assert psi(0) == pytest.approx(0.25)
        x = 1.3
        assert psi(x) == pytest.approx(math.exp(x) / (1 + math.exp(x)) ** 2, rel=1e-14)
        assert psi(-x) == pytest.approx(psi(x))
        assert np.isfinite(psi(800.0))

    def test_bound_rhs(self):
        alpha, lam, r, err, tail = 2.0, 0.01, 3, 0.4, 0.2
        ref = 36 * lam * (alpha + (1 + math.exp(4)) ** 2 / math.exp(4)) * (math.sqrt(6) * err + tail)
        assert graph_bound_rhs(alpha, lam, r, err, tail) == pytest.approx(ref, rel=1e-12)
        assert graph_bound_rhs(1.0, 0.1, 0, 5.0, 0.0) == 0.0


def test_error_report():
    rep = ErrorReport(0.3, 0.2, 0.1, [0.5, 0.25])
    row = rep.to_row()
    assert row["sigma_tail"] == "0.5;0.25" and row["rmse"] == 0.3
    assert ErrorReport(0.1).to_row()["l_rmse"] == ""
    with pytest.raises(ValueError):
        ErrorReport(-1.0)
    with pytest.raises(ValueError):
        ErrorReport(0.1, prediction_error=1.5)
