"""
Tests for the recompute policy and straight-through training
"""
import math
import unittest

import numpy as np

from tsvd.core.exceptions import DimensionMismatchError, UnsupportedGeometryError
from tsvd.models.conv import ConvSpec, FormType
from tsvd.models.decompose import DecomposeConfig, ErrorNorm
from tsvd.models.ternary import TernaryMatrix
from tsvd.services.convmap import ConvMapper
from tsvd.services.decompose import TsvdDecomposer
from tsvd.services.qat import QatTrainer
from tsvd.services.ternary_ops import TernaryOps

THETA = 0.775


class TestMainTailSplit(unittest.TestCase):
    """Test cases for split_main_tail"""

    def setUp(self):
        self.rng = np.random.default_rng(0)
        self.cfg = DecomposeConfig(theta=THETA, tol=0.1, max_rank=200)
        self.w = self.rng.standard_normal((12, 8))
        self.fact = TsvdDecomposer.tsvd_decompose(self.w, self.cfg).factorization

    def test_mask_is_the_threshold_comparison(self):
        """Test the mask recomputed from the returned quantities"""
        w_new = self.w + 0.3 * self.rng.standard_normal(self.w.shape)
        for eta in (0.0, 0.5, 1.0, 2.0):
            split = QatTrainer.split_main_tail(w_new, self.fact.u, self.fact.v, eta, THETA)
            norms = np.sqrt(np.count_nonzero(self.fact.u.codes, axis=0) * np.count_nonzero(self.fact.v.codes, axis=1))
            np.testing.assert_allclose(split.scores, np.abs(split.s) * norms, rtol=1e-12)
            np.testing.assert_array_equal(split.mask, split.scores > eta * split.reference)

    def test_mask_ignores_sign_of_singulars(self):
        """Test flipping the sign of a factor column negates its S but keeps the mask"""
        w_new = self.w + 0.3 * self.rng.standard_normal(self.w.shape)
        split = QatTrainer.split_main_tail(w_new, self.fact.u, self.fact.v, 1.0, THETA)
        codes = self.fact.u.codes.copy()
        codes[:, 0] *= -1
        flipped = QatTrainer.split_main_tail(w_new, TernaryMatrix(codes=codes), self.fact.v, 1.0, THETA)
        self.assertAlmostEqual(flipped.s[0], -split.s[0], places=9)
        np.testing.assert_allclose(flipped.scores, split.scores, rtol=1e-9)
        np.testing.assert_array_equal(flipped.mask, split.mask)

    def test_doubled_weight_doubles_singulars(self):
        """Test re-solving S on a scaled weight"""
        split = QatTrainer.split_main_tail(2.0 * self.w, self.fact.u, self.fact.v, 1.0, THETA)
        np.testing.assert_allclose(split.s, 2.0 * TsvdDecomposer.solve_singulars(self.fact.u, self.fact.v, self.w),
                                   rtol=1e-9, atol=1e-12)

    def test_infinite_eta_keeps_nothing(self):
        """Test eta = inf restarts from scratch"""
        split = QatTrainer.split_main_tail(self.w, self.fact.u, self.fact.v, math.inf, THETA)
        self.assertEqual(split.kept, 0)

    def test_zero_eta_keeps_all_nonzero(self):
        """Test eta = 0 keeps every direction with a nonzero score"""
        split = QatTrainer.split_main_tail(self.w, self.fact.u, self.fact.v, 0.0, THETA)
        self.assertEqual(split.kept, int(np.count_nonzero(split.scores)))

    def test_shape_mismatch(self):
        """Test a weight that does not fit the factors"""
        with self.assertRaises(DimensionMismatchError):
            QatTrainer.split_main_tail(np.ones((3, 3)), self.fact.u, self.fact.v, 1.0, THETA)

    def test_warm_start_keeps_more(self):
        """Test a small update keeps at least as many directions as a fresh weight"""
        rng = np.random.default_rng(1)
        near_total = fresh_total = 0
        for _ in range(20):
            w_old = rng.standard_normal((10, 6))
            fact = TsvdDecomposer.tsvd_decompose(w_old, self.cfg).factorization
            nudge = rng.standard_normal(w_old.shape)
            w_near = w_old + 0.01 * np.linalg.norm(w_old) * nudge / np.linalg.norm(nudge)
            w_fresh = rng.standard_normal(w_old.shape)
            near_total += QatTrainer.split_main_tail(w_near, fact.u, fact.v, 1.0, THETA).kept
            fresh_total += QatTrainer.split_main_tail(w_fresh, fact.u, fact.v, 1.0, THETA).kept
        self.assertGreaterEqual(near_total, fresh_total)


class TestRecompute(unittest.TestCase):
    """Test cases for qat_recompute and ste_step"""

    def setUp(self):
        self.rng = np.random.default_rng(2)
        self.cfg = DecomposeConfig(theta=THETA, tol=0.1, max_rank=200, error_norm=ErrorNorm.FROBENIUS)

    def test_recompute_meets_tolerance(self):
        """Test the refreshed factorization reaches tol"""
        w = self.rng.standard_normal((10, 8))
        fact = TsvdDecomposer.tsvd_decompose(w, self.cfg).factorization
        w_new = w + 0.05 * self.rng.standard_normal(w.shape)
        refreshed = QatTrainer.qat_recompute(w_new, fact.u, fact.v, 1.0, self.cfg)
        err = TsvdDecomposer.relative_error(w_new, TernaryOps.reconstruct(refreshed), ErrorNorm.FROBENIUS)
        self.assertLessEqual(err, 0.1 + 1e-12)

    def test_unchanged_weight_keeps_factors(self):
        """Test recomputing an unchanged weight at eta = 0 keeps the old factors as a prefix"""
        w = self.rng.standard_normal((8, 8))
        fact = TsvdDecomposer.tsvd_decompose(w, self.cfg).factorization
        refreshed = QatTrainer.qat_recompute(w, fact.u, fact.v, 0.0, self.cfg)
        split = QatTrainer.split_main_tail(w, fact.u, fact.v, 0.0, THETA)
        np.testing.assert_array_equal(refreshed.u.codes[:, :split.kept], fact.u.codes[:, split.mask])

    def test_infinite_eta_matches_cold_start(self):
        """Test eta = inf gives the same factors as decomposing from scratch"""
        w = self.rng.standard_normal((9, 7))
        fact = TsvdDecomposer.tsvd_decompose(w, self.cfg).factorization
        w_new = w + 0.2 * self.rng.standard_normal(w.shape)
        refreshed = QatTrainer.qat_recompute(w_new, fact.u, fact.v, math.inf, self.cfg)
        cold = TsvdDecomposer.tsvd_decompose(w_new, self.cfg).factorization
        self.assertEqual(refreshed.rank, cold.rank)
        np.testing.assert_array_equal(refreshed.u.codes, cold.u.codes)
        np.testing.assert_allclose(refreshed.s, cold.s, rtol=1e-9, atol=1e-12)

    def test_ste_step_moves_latent_weight(self):
        """Test the gradient reaches the latent weight unchanged"""
        w = self.rng.standard_normal((6, 4))
        state = QatTrainer.init_state(w, eta=1.0, cfg=self.cfg)
        grad = self.rng.standard_normal(w.shape)
        nxt = QatTrainer.ste_step(state, grad, 0.1)
        np.testing.assert_allclose(nxt.w, w - 0.1 * grad)
        self.assertEqual(nxt.fact.source_shape, (6, 4))
        self.assertEqual(nxt.theta, THETA)

    def test_ste_step_shape(self):
        """Test a gradient of the wrong shape"""
        state = QatTrainer.init_state(self.rng.standard_normal((6, 4)), cfg=self.cfg)
        with self.assertRaises(DimensionMismatchError):
            QatTrainer.ste_step(state, np.zeros((4, 6)), 0.1)


class TestConvRecompute(unittest.TestCase):
    """Test cases for conv_qat_recompute"""

    def setUp(self):
        self.rng = np.random.default_rng(3)
        self.cfg = DecomposeConfig(theta=THETA, tol=0.1, error_norm=ErrorNorm.FROBENIUS)
        self.kernel = self.rng.standard_normal((3, 3, 3, 3))

    def test_keeps_form(self):
        """Test the form and geometry survive a recompute"""
        f_old = ConvMapper.decompose_conv(self.kernel, FormType.F2, self.cfg).factorization
        kernel_new = self.kernel + 0.01 * self.rng.standard_normal(self.kernel.shape)
        f_new = QatTrainer.conv_qat_recompute(kernel_new, f_old, 1.0, self.cfg)
        self.assertEqual(f_new.form, FormType.F2)
        self.assertEqual(f_new.conv, f_old.conv)
        recon = ConvMapper.reconstruct_kernel(f_new)
        self.assertLessEqual(np.linalg.norm(recon - kernel_new) / np.linalg.norm(kernel_new), 0.1 + 1e-12)

    def test_empty_main_reselects(self):
        """Test eta = inf selects the form again"""
        f_old = ConvMapper.decompose_conv(self.kernel, FormType.F3, self.cfg).factorization
        f_new = QatTrainer.conv_qat_recompute(self.kernel, f_old, math.inf, self.cfg)
        form, expected = ConvMapper.select_form(self.kernel, self.cfg, f_old.conv)
        self.assertEqual(f_new.form, form)
        self.assertEqual(f_new.rank, expected.rank)

    def test_grouped_rejected(self):
        """Test grouped factorizations are not supported"""
        spec = ConvSpec(c_out=4, c_in=4, k1=3, k2=3, groups=2)
        kernel = self.rng.standard_normal(spec.kernel_shape)
        f_old = ConvMapper.decompose_conv(kernel, FormType.F0, self.cfg, spec).factorization
        with self.assertRaises(UnsupportedGeometryError):
            QatTrainer.conv_qat_recompute(kernel, f_old, 1.0, self.cfg)


class TestRegressionDemo(unittest.TestCase):
    """Test cases for the toy regression"""

    def test_close_to_least_squares(self):
        """Test the trained residual is within 10% of the least-squares optimum"""
        report = QatTrainer.regression_demo()
        self.assertEqual(len(report.losses), 200)
        self.assertLessEqual(report.ratio, 1.1)
        self.assertGreaterEqual(report.ratio, 1.0 - 1e-9)
        self.assertLess(report.losses[-1], report.losses[0])


if __name__ == "__main__":
    unittest.main()
