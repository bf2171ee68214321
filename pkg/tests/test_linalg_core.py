import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from amdl import linalg_core as lc
from amdl.errors import DowndateLostPD, NotPositiveDefinite, RankDeficient
from amdl.gen_model import sample_orthogonal_dictionary

from conftest import random_spd

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
small_matrices = arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=finite)


class TestHardThreshold:
    def test_boundary_entry_is_kept(self):
        out = lc.hard_threshold(np.array([[0.6, 0.4], [-0.5, 0.2]]), 0.5)
        np.testing.assert_array_equal(out, [[0.6, 0.0], [-0.5, 0.0]])

    def test_zero_threshold_is_identity(self, rng):
        a = rng.standard_normal((4, 7))
        np.testing.assert_array_equal(lc.hard_threshold(a, 0.0), a)

    def test_zero_matrix(self):
        np.testing.assert_array_equal(lc.hard_threshold(np.zeros((3, 3)), 1.0), np.zeros((3, 3)))

    def test_negative_threshold_rejected(self):
        with pytest.raises(ValueError):
            lc.hard_threshold(np.ones((2, 2)), -0.1)

    @given(small_matrices, st.floats(0, 1e3))
    def test_idempotent_and_shrinking(self, a, zeta):
        once = lc.hard_threshold(a, zeta)
        np.testing.assert_array_equal(lc.hard_threshold(once, zeta), once)
        assert np.all(np.abs(once) <= np.abs(a))
        kept = once != 0
        np.testing.assert_array_equal(once[kept], a[kept])
        assert np.all(np.abs(a[kept]) >= zeta)


class TestPolar:
    def test_identity(self):
        np.testing.assert_allclose(lc.polar(np.eye(4)), np.eye(4), atol=1e-14)

    def test_positive_diagonal(self):
        np.testing.assert_allclose(lc.polar(np.diag([2.0, 3.0])), np.eye(2), atol=1e-14)

    def test_hand_factorized(self):
        np.testing.assert_allclose(lc.polar(np.array([[0.0, -2.0], [1.0, 0.0]])), [[0, -1], [1, 0]], atol=1e-14)

    def test_rank_deficient(self):
        with pytest.raises(RankDeficient):
            lc.polar(np.array([[1.0, 2.0], [2.0, 4.0]]))
        with pytest.raises(RankDeficient):
            lc.polar(np.zeros((3, 3)))

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            lc.polar(np.ones((2, 3)))

    @pytest.mark.parametrize("n", [2, 8, 32])
    def test_fixed_point_on_orthogonal(self, n):
        for s in range(50):
            q = sample_orthogonal_dictionary(n, s)
            assert np.linalg.norm(lc.polar(q) - q) <= 1e-10

    def test_output_orthogonal_and_symmetric_psd_product(self, rng):
        a = rng.standard_normal((7, 7))
        q = lc.polar(a)
        assert lc.orthogonality_defect(q) <= 1e-10
        h = q.T @ a
        np.testing.assert_allclose(h, h.T, atol=1e-10)
        assert np.linalg.eigvalsh((h + h.T) / 2).min() >= -1e-10

    def test_procrustes_optimality(self, rng):
        a = rng.standard_normal((6, 6))
        best = np.trace(lc.polar(a).T @ a)
        for s in range(100):
            q = sample_orthogonal_dictionary(6, 500 + s)
            assert best >= np.trace(q.T @ a) - 1e-10

    @given(st.floats(1e-3, 1e4))
    def test_scale_invariance(self, c):
        a = np.random.default_rng(3).standard_normal((5, 5))
        assert np.linalg.norm(lc.polar(c * a) - lc.polar(a)) <= 1e-10


class TestCholesky:
    def test_identity(self):
        np.testing.assert_array_equal(lc.cholesky(np.eye(3)), np.eye(3))

    def test_hand_2x2(self):
        np.testing.assert_allclose(lc.cholesky(np.array([[4.0, 2.0], [2.0, 5.0]])), [[2, 0], [1, 2]], atol=1e-15)

    def test_indefinite(self):
        with pytest.raises(NotPositiveDefinite):
            lc.cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_asymmetric_rejected(self):
        with pytest.raises(ValueError):
            lc.cholesky(np.array([[2.0, 1.0], [0.0, 2.0]]))

    @pytest.mark.parametrize("n", [1, 2, 5, 16, 64, 128])
    def test_reconstruction(self, rng, n):
        a = random_spd(rng, n)
        low = lc.cholesky(a)
        assert np.all(np.triu(low, 1) == 0)
        assert np.all(np.diag(low) > 0)
        assert np.linalg.norm(low @ low.T - a) / np.linalg.norm(a) <= 1e-12


class TestSpdInverse:
    def test_examples(self):
        np.testing.assert_allclose(lc.spd_inverse(np.eye(3)), np.eye(3))
        np.testing.assert_allclose(lc.spd_inverse(np.diag([2.0, 4.0])), np.diag([0.5, 0.25]))
        np.testing.assert_allclose(
            lc.spd_inverse(np.array([[4.0, 2.0], [2.0, 5.0]])), np.array([[5, -2], [-2, 4]]) / 16, atol=1e-15
        )

    def test_propagates_not_pd(self):
        with pytest.raises(NotPositiveDefinite):
            lc.spd_inverse(np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_symmetric_output(self, rng):
        inv = lc.spd_inverse(random_spd(rng, 20))
        np.testing.assert_array_equal(inv, inv.T)


class TestShermanMorrison:
    def test_unit_vector(self):
        new, v = lc.sherman_morrison_update(np.eye(2), np.array([1.0, 0.0]))
        np.testing.assert_allclose(new, np.diag([0.5, 1.0]), atol=1e-15)
        np.testing.assert_allclose(v, [1 / math.sqrt(2), 0.0], atol=1e-15)

    def test_zero_vector(self, rng):
        a = lc.spd_inverse(random_spd(rng, 4))
        new, v = lc.sherman_morrison_update(a, np.zeros(4))
        np.testing.assert_array_equal(new, a)
        np.testing.assert_array_equal(v, np.zeros(4))

    def test_matches_recompute(self, rng):
        a_inv = lc.spd_inverse(random_spd(rng, 8))
        y = rng.standard_normal(8)
        new, _ = lc.sherman_morrison_update(a_inv, y)
        ref = lc.spd_inverse(lc.spd_inverse(a_inv) + np.outer(y, y))
        np.testing.assert_allclose(new, ref, atol=1e-8)

    def test_composed_100_updates(self, rng):
        gram = random_spd(rng, 40)
        inv = lc.spd_inverse(gram)
        for _ in range(100):
            y = rng.standard_normal(40)
            inv, _ = lc.sherman_morrison_update(inv, y)
            gram += np.outer(y, y)
        ref = lc.spd_inverse(gram)
        assert np.linalg.norm(inv - ref) / np.linalg.norm(ref) <= 1e-6


class TestCholDowndate:
    def test_scalar(self):
        np.testing.assert_allclose(lc.chol_downdate(np.array([[1.0]]), np.array([0.6])), [[0.8]], atol=1e-15)

    def test_zero_vector(self, rng):
        low = np.linalg.cholesky(random_spd(rng, 5))
        np.testing.assert_array_equal(lc.chol_downdate(low, np.zeros(5)), low)

    def test_loses_pd(self):
        with pytest.raises(DowndateLostPD):
            lc.chol_downdate(np.eye(2), np.array([1.0, 0.0]))
        with pytest.raises(DowndateLostPD):
            lc.chol_downdate(np.eye(2), np.array([0.8, 0.8]))

    def test_oracle_200_instances(self, rng):
        for i in range(200):
            n = 1 + i % 12
            low = np.linalg.cholesky(random_spd(rng, n))
            smin = np.linalg.svd(low, compute_uv=False)[-1]
            v = rng.standard_normal(n)
            v *= 0.5 * smin * rng.random() / np.linalg.norm(v)
            got = lc.chol_downdate(low, v)
            ref = np.linalg.cholesky(low @ low.T - np.outer(v, v))
            assert np.all(np.triu(got, 1) == 0)
            assert np.linalg.norm(got - ref) / np.linalg.norm(ref) <= 1e-9

    def test_does_not_mutate_input(self, rng):
        low = np.linalg.cholesky(random_spd(rng, 4))
        keep = low.copy()
        lc.chol_downdate(low, 0.1 * np.ones(4))
        np.testing.assert_array_equal(low, keep)


def test_whitening_transform_orthogonalizes(rng):
    for kappa in (1.0, 3.0, 10.0):
        u, _ = np.linalg.qr(rng.standard_normal((12, 12)))
        v, _ = np.linalg.qr(rng.standard_normal((12, 12)))
        a = u @ np.diag(np.logspace(0, -math.log10(kappa), 12)) @ v.T
        w = lc.whitening_transform(a)
        assert np.all(np.tril(w, -1) == 0)
        assert lc.orthogonality_defect(w @ a) <= 1e-9
