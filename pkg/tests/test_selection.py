"""Subject-selection tests: determinant scores, uncertainty set, k-means."""

import numpy as np
import pytest

from alogit.errors import EmptyUncertaintySet, NotPositiveDefinite
from alogit.glm import fisher_info, mu, mu_dot
from alogit.selection import (
    SelectionConfig,
    cluster_prefilter,
    d_scores,
    kmeans,
    select_next,
    uncertainty_set,
)

from oracles import cofactor_det, exhaustive_two_stage


class TestDScores:
    def test_identity_fisher_unit_vector(self):
        got = d_scores(np.array([[1.0, 0.0]]), np.eye(2), np.zeros(2))
        assert got[0] == pytest.approx(1.25, rel=1e-12)

    def test_zero_candidate_adds_nothing(self):
        f = np.array([[2.0, 0.3], [0.3, 1.5]])
        got = d_scores(np.zeros((1, 2)), f, np.array([0.4, -0.2]))
        assert got[0] == pytest.approx(cofactor_det(f), rel=1e-12)

    def test_ordering_matches_brute_force(self):
        rng = np.random.default_rng(31)
        x = rng.standard_normal((60, 4))
        beta = np.array([0.5, -1.0, 0.2, 0.0])
        fisher = fisher_info(beta, x)
        cands = rng.standard_normal((50, 4))
        got = d_scores(cands, fisher, beta)
        brute = np.array(
            [
                cofactor_det(fisher + mu_dot(float(c @ beta)) * np.outer(c, c))
                for c in cands
            ]
        )
        np.testing.assert_array_equal(np.argsort(-got, kind="stable"),
                                      np.argsort(-brute, kind="stable"))
        np.testing.assert_allclose(got, brute, rtol=1e-8)

    def test_ranking_invariant_to_det_scale(self):
        rng = np.random.default_rng(32)
        x = rng.standard_normal((40, 3))
        beta = np.array([1.0, 0.0, -0.5])
        fisher = fisher_info(beta, x)
        cands = rng.standard_normal((25, 3))
        scores = d_scores(cands, fisher, beta)
        # ranking by (1 + w * leverage) alone must agree
        from alogit.numerics import cholesky, solve_lower

        l = cholesky(fisher)
        z = solve_lower(l, cands.T)
        alt = 1.0 + mu_dot(cands @ beta) * np.sum(z * z, axis=0)
        np.testing.assert_array_equal(np.argsort(-scores, kind="stable"),
                                      np.argsort(-alt, kind="stable"))

    def test_not_positive_definite_propagates(self):
        with pytest.raises(NotPositiveDefinite):
            d_scores(np.ones((1, 2)), np.array([[1.0, 2.0], [2.0, 1.0]]),
                     np.zeros(2))


class TestUncertaintySet:
    def test_full_set_when_rho_one(self):
        scores = np.array([0.5, 2.0, 1.0])
        got = uncertainty_set(scores, 1.0)
        assert got.tolist() == [1, 2, 0]

    def test_ceiling_count(self):
        scores = np.arange(10, dtype=float)
        got = uncertainty_set(scores, 0.25)
        assert len(got) == 3  # ceil(2.5)
        assert got.tolist() == [9, 8, 7]

    def test_ties_break_by_low_index(self):
        scores = np.ones(10)
        got = uncertainty_set(scores, 0.25)
        assert got.tolist() == [0, 1, 2]


class TestSelectNext:
    def test_exact_target_hit(self):
        b = np.array([[1.0, 0.0], [0.0, 1.0], [5.0, 5.0]])
        beta = np.array([0.0, 2.0])  # mu = 0.5, 0.881, ~1
        got = select_next(np.array([0, 1, 2]), b, beta, p_t=0.5)
        assert got == 0

    def test_degenerate_model_lowest_index(self):
        b = np.random.default_rng(33).standard_normal((8, 3))
        got = select_next(np.arange(8), b, np.zeros(3), p_t=0.3)
        assert got == 0

    def test_matches_exhaustive_scan(self):
        rng = np.random.default_rng(34)
        b = rng.standard_normal((30, 3))
        beta = np.array([0.7, -0.3, 0.1])
        got = select_next(np.arange(30), b, beta, p_t=0.5)
        u = np.abs(mu(b @ beta) - 0.5)
        assert got == int(np.lexsort((np.arange(30), u))[0])

    def test_empty_set(self):
        with pytest.raises(EmptyUncertaintySet):
            select_next(np.array([], dtype=int), np.zeros((0, 2)), np.zeros(2), 0.5)


class TestTwoStagePipeline:
    def test_full_pipeline_equals_exhaustive_oracle(self):
        rng = np.random.default_rng(35)
        x = rng.standard_normal((50, 3))
        beta = np.array([1.0, -0.5, 0.0])
        fisher = fisher_info(beta, x)
        cands = rng.standard_normal((40, 3))
        for rho in (1.0, 0.25, 0.05):
            scores = d_scores(cands, fisher, beta)
            top = uncertainty_set(scores, rho)
            got = select_next(top, cands, beta, 0.5)
            expected = exhaustive_two_stage(cands, fisher, beta, rho, 0.5)
            assert got == expected, f"rho={rho}"

    def test_deterministic_under_shuffled_evaluation(self):
        rng = np.random.default_rng(36)
        cands = rng.standard_normal((20, 2))
        cands[7] = cands[3]  # force a tie
        fisher = np.eye(2) * 4.0
        beta = np.zeros(2)
        first = select_next(uncertainty_set(d_scores(cands, fisher, beta), 0.5),
                            cands, beta, 0.5)
        again = select_next(uncertainty_set(d_scores(cands, fisher, beta), 0.5),
                            cands, beta, 0.5)
        assert first == again


class TestKmeans:
    def test_separated_blobs_recovered(self):
        rng = np.random.default_rng(37)
        a = rng.standard_normal((30, 2)) * 0.1 + np.array([0.0, 0.0])
        b = rng.standard_normal((30, 2)) * 0.1 + np.array([10.0, 10.0])
        x = np.vstack([a, b])
        assignment = cluster_prefilter(x, k=2, seed=5)
        first, second = assignment[:30], assignment[30:]
        assert len(set(first.tolist())) == 1
        assert len(set(second.tolist())) == 1
        assert first[0] != second[0]

    def test_saturated_k_every_point_own_cluster(self):
        rng = np.random.default_rng(38)
        x = rng.standard_normal((6, 2)) * 5.0
        assignment = cluster_prefilter(x, k=6, seed=1)
        assert len(set(assignment.tolist())) == 6

    def test_same_seed_same_assignment(self):
        rng = np.random.default_rng(39)
        x = rng.standard_normal((100, 3))
        a1 = cluster_prefilter(x, k=5, seed=9)
        a2 = cluster_prefilter(x, k=5, seed=9)
        np.testing.assert_array_equal(a1, a2)

    def test_centers_returned(self):
        rng = np.random.default_rng(40)
        x = rng.standard_normal((50, 2))
        assignment, centers = kmeans(x, 4, seed=2)
        assert centers.shape == (4, 2)
        assert assignment.min() >= 0 and assignment.max() < 4


class TestSelectionConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            SelectionConfig(rho=0.0)
        with pytest.raises(ValueError):
            SelectionConfig(rho=1.2)
        with pytest.raises(ValueError):
            SelectionConfig(p_target=1.0)
