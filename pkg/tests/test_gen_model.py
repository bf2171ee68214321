import math

import numpy as np
import pytest

from amdl import linalg_core as lc
from amdl.gen_model import (
    GenerativeParams,
    perturb_dictionary,
    rng_for,
    sample_code,
    sample_complete_dictionary,
    sample_ground_truth,
    sample_orthogonal_dictionary,
)


class TestParams:
    def test_sigma_defaults_to_gamma(self):
        assert GenerativeParams(n=3, p=4, theta=0.5, gamma=2.0).sigma == 2.0

    def test_orthogonal_forces_unit_kappa(self):
        assert GenerativeParams(n=3, p=4, theta=0.5, kappa_hat=5.0).kappa_hat == 1.0

    @pytest.mark.parametrize(
        "kw",
        [
            dict(theta=0.0),
            dict(theta=1.5),
            dict(gamma=0.0),
            dict(gamma=1.0, sigma=2.0),
            dict(value_dist="sign_halfnormal", sigma=0.5),
            dict(dict_kind="complete", kappa_hat=0.5),
            dict(dict_kind="banana"),
            dict(value_dist="gaussian"),
        ],
    )
    def test_invalid(self, kw):
        base = dict(n=3, p=4, theta=0.5)
        base.update(kw)
        with pytest.raises(ValueError):
            GenerativeParams(**base)

    def test_scale(self):
        assert GenerativeParams(n=3, p=400, theta=0.25, gamma=2.0).scale == pytest.approx(400.0)


class TestDictionaries:
    def test_orthogonal_n1(self):
        q = sample_orthogonal_dictionary(1, 0)
        assert abs(abs(q[0, 0]) - 1) < 1e-15

    def test_orthogonal_properties(self):
        for n in (2, 8, 33):
            q = sample_orthogonal_dictionary(n, n)
            assert lc.orthogonality_defect(q) <= 1e-12
            assert np.linalg.norm(lc.polar(q) - q) <= 1e-10

    def test_seeds_differ(self):
        assert np.linalg.norm(sample_orthogonal_dictionary(8, 1) - sample_orthogonal_dictionary(8, 2)) > 0.1

    def test_complete_unit_kappa_is_orthogonal(self):
        assert lc.orthogonality_defect(sample_complete_dictionary(6, 1.0, 0)) <= 1e-12

    def test_complete_n2_kappa4(self):
        s = np.linalg.svd(sample_complete_dictionary(2, 4.0, 0), compute_uv=False)
        np.testing.assert_allclose(s, [1.0, 0.25], atol=1e-12)

    def test_complete_condition_number(self):
        s = np.linalg.svd(sample_complete_dictionary(16, 3.0, 9), compute_uv=False)
        assert abs(s[0] - 1) <= 1e-8
        assert abs(s[0] / s[-1] - 3) <= 1e-8


class TestCode:
    def test_theta_one_rademacher(self):
        x = sample_code(GenerativeParams(n=4, p=30, theta=1.0, gamma=1.5))
        np.testing.assert_array_equal(np.abs(x), 1.5)

    def test_binomial_count(self):
        for seed in range(20):
            x = sample_code(GenerativeParams(n=50, p=2000, theta=0.1, seed=seed))
            assert abs(np.count_nonzero(x) - 10000) <= 4 * math.sqrt(9000)

    def test_zero_mean(self):
        x = sample_code(GenerativeParams(n=50, p=2000, theta=0.1, seed=1))
        nz = x[x != 0]
        assert abs(nz.mean()) <= 4 / math.sqrt(nz.size)

    def test_halfnormal_moments_and_floor(self):
        gp = GenerativeParams(n=40, p=5000, theta=0.2, gamma=1.0, sigma=1.5, value_dist="sign_halfnormal", seed=2)
        nz = sample_code(gp)
        nz = nz[nz != 0]
        assert np.all(np.abs(nz) >= 1.0)
        assert abs(np.mean(nz**2) - 1.5**2) < 0.05 * 1.5**2
        assert abs(nz.mean()) <= 4 * 1.5 / math.sqrt(nz.size)

    def test_column_covariance(self):
        n, p, theta = 20, 100_000, 0.1
        x = sample_code(GenerativeParams(n=n, p=p, theta=theta, seed=4))
        cov = x @ x.T / p
        off = cov - np.diag(np.diag(cov))
        assert np.max(np.abs(off)) <= 5 * math.sqrt(theta / p) * math.sqrt(math.log(n))
        np.testing.assert_allclose(np.diag(cov), theta, rtol=0.05)


class TestGroundTruth:
    @pytest.mark.parametrize("kind", ["orthogonal", "complete"])
    def test_invariants(self, kind):
        gp = GenerativeParams(n=10, p=300, theta=0.2, dict_kind=kind, kappa_hat=2.5, seed=3)
        gt = sample_ground_truth(gp)
        np.testing.assert_allclose(gt.signals, gt.dictionary @ gt.code, atol=1e-14)
        assert np.all(np.abs(gt.code[gt.support]) >= gp.gamma)
        assert np.all(gt.code[~gt.support] == 0)
        assert len(gt.support_pairs()) == int(gt.support.sum())
        if kind == "orthogonal":
            assert lc.orthogonality_defect(gt.dictionary) <= 1e-10
        else:
            s = np.linalg.svd(gt.dictionary, compute_uv=False)
            assert abs(s[0] - 1) <= 1e-8 and abs(s[0] / s[-1] - 2.5) <= 1e-8

    def test_bitwise_determinism(self):
        gp = GenerativeParams(n=7, p=90, theta=0.3, seed=99)
        a, b = sample_ground_truth(gp), sample_ground_truth(gp)
        for f in ("dictionary", "code", "signals"):
            assert getattr(a, f).tobytes() == getattr(b, f).tobytes()

    def test_streams_are_independent(self):
        a = rng_for(1, 2).random(5)
        b = rng_for(1, 3).random(5)
        assert not np.array_equal(a, b)
        np.testing.assert_array_equal(a, rng_for(1, 2).random(5))


class TestPerturb:
    def test_zero_delta(self):
        d = sample_orthogonal_dictionary(5, 0)
        for kind in ("orthogonal", "general"):
            np.testing.assert_array_equal(perturb_dictionary(d, 0.0, kind, 1), d)

    def test_orthogonal_kind(self):
        d = sample_orthogonal_dictionary(20, 0)
        for seed in range(10):
            q = perturb_dictionary(d, 0.1, "orthogonal", seed)
            assert lc.orthogonality_defect(q) <= 1e-10
            assert 0.09 <= np.linalg.norm(q - d) <= 0.11

    def test_general_kind_exact(self):
        a = sample_complete_dictionary(9, 3.0, 0)
        b = perturb_dictionary(a, 0.3, "general", 5)
        assert np.linalg.norm(b - a) == pytest.approx(0.3, rel=1e-12)

    def test_negative_delta(self):
        with pytest.raises(ValueError):
            perturb_dictionary(np.eye(2), -1.0, "general", 0)


def test_code_spectrum_bounds_hold_with_more_samples():
    # at p = n / theta^2 the random-matrix edges 1 +/- sqrt(n/p) sit on the bounds themselves;
    # ten times more samples moves them to about 1 +/- 0.03
    n, theta, p = 50, 0.1, 50_000
    for seed in range(3):
        s = np.linalg.svd(sample_code(GenerativeParams(n=n, p=p, theta=theta, seed=seed)), compute_uv=False)
        r = math.sqrt(p * theta)
        assert s[0] <= 1.1 * r and s[-1] >= 0.9 * r
