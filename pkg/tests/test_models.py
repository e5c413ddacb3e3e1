"""
Tests for the ternary, convolution, cost and study models
"""
import itertools
import math
import unittest

import numpy as np
from pydantic import ValidationError

from tsvd.core.exceptions import DimensionMismatchError, TernaryCodeError
from tsvd.models.conv import ConvSpec, FormType, TileSpec
from tsvd.models.cost import BaselineMethod, BaselineSpec, CostReport
from tsvd.models.decompose import DecomposeConfig, QMode, QPolicy
from tsvd.models.study import Preset, StudyConfig
from tsvd.models.ternary import AngleThreshold, ErrorNorm, TernaryMatrix, TernaryVector, TsvdFactorization


def random_ternary(rng, rows, cols):
    return TernaryMatrix(codes=rng.integers(-1, 2, size=(rows, cols)))


class TestAngleThreshold(unittest.TestCase):
    """Test cases for AngleThreshold"""

    def test_cosine_is_cached(self):
        """Test cos_theta is filled from theta"""
        a = AngleThreshold(theta=0.576)
        self.assertEqual(a.cos_theta, math.cos(0.576))

    def test_from_degrees(self):
        """Test building a threshold from degrees"""
        a = AngleThreshold.from_degrees(33)
        self.assertAlmostEqual(a.theta, math.radians(33))
        self.assertAlmostEqual(a.degrees, 33.0)

    def test_out_of_range(self):
        """Test theta outside (0, pi/2) is rejected"""
        for theta in (0.0, -0.1, math.pi / 2, 2.0):
            with self.assertRaises(ValidationError):
                AngleThreshold(theta=theta)

    def test_inconsistent_cosine(self):
        """Test a supplied cosine must match theta"""
        with self.assertRaises(ValidationError):
            AngleThreshold(theta=0.5, cos_theta=0.1)


class TestTernaryMatrix(unittest.TestCase):
    """Test cases for TernaryMatrix and TernaryVector"""

    def setUp(self):
        self.rng = np.random.default_rng(7)

    def test_rejects_non_ternary_entries(self):
        """Test entries other than -1, 0, +1 are rejected"""
        with self.assertRaises(ValidationError):
            TernaryMatrix(codes=[[0, 2]])
        with self.assertRaises(ValidationError):
            TernaryVector(entries=[0.5, 1])

    def test_codes_are_read_only(self):
        """Test the stored codes cannot be mutated"""
        t = TernaryMatrix(codes=[[1, 0], [-1, 1]])
        with self.assertRaises(ValueError):
            t.codes[0, 0] = 0

    def test_counts(self):
        """Test nnz, sparsity and row_bytes"""
        t = TernaryMatrix(codes=[[1, 0, 0, -1, 1], [0, 0, 0, 0, 0]])
        self.assertEqual(t.nnz, 3)
        self.assertAlmostEqual(t.sparsity, 0.3)
        self.assertEqual(t.row_bytes, 2)
        self.assertEqual(TernaryMatrix.empty(3, 0).sparsity, 0.0)

    def test_split_signs(self):
        """Test the plus and minus parts recompose the codes"""
        t = random_ternary(self.rng, 6, 9)
        plus, minus = t.split_signs()
        np.testing.assert_array_equal(plus.astype(np.int8) - minus.astype(np.int8), t.codes)
        self.assertFalse(np.any(plus & minus))

    def test_payload_layout(self):
        """Test 2-bit codes are packed from the low bits with zero row padding"""
        t = TernaryMatrix(codes=[[1, -1, 0, 1, -1]])
        payload = t.to_payload()
        self.assertEqual(payload, bytes([0b01_00_10_01, 0b00_00_00_10]))

    def test_payload_round_trip(self):
        """Test decoding an encoded payload restores the matrix"""
        for cols in (1, 3, 4, 7, 16):
            t = random_ternary(self.rng, 5, cols)
            self.assertEqual(TernaryMatrix.from_payload(t.to_payload(), 5, cols), t)

    def test_payload_exhaustive(self):
        """Test every ternary matrix with at most nine entries packs and unpacks exactly"""
        two_bit = {0: 0, 1: 1, -1: 2}
        for rows in range(1, 10):
            for cols in range(1, 9 // rows + 1):
                every = np.array(list(itertools.product((-1, 0, 1), repeat=rows * cols)), dtype=np.int8)
                row_bytes = (cols + 3) // 4
                for codes in every.reshape(-1, rows, cols):
                    t = TernaryMatrix(codes=codes)
                    payload = t.to_payload()
                    expected = bytes(
                        sum(two_bit[int(codes[r, c])] << (2 * (c % 4)) for c in range(4 * b, min(4 * b + 4, cols)))
                        for r in range(rows) for b in range(row_bytes)
                    )
                    self.assertEqual(payload, expected)
                    np.testing.assert_array_equal(TernaryMatrix.from_payload(payload, rows, cols).codes, codes)

    def test_forbidden_code(self):
        """Test code 11 is rejected with its byte offset"""
        payload = bytearray(TernaryMatrix.empty(2, 4).to_payload())
        payload[1] = 0b00_11_00_00
        with self.assertRaises(TernaryCodeError) as ctx:
            TernaryMatrix.from_payload(bytes(payload), 2, 4, offset=100)
        self.assertEqual(ctx.exception.offset, 101)

    def test_dirty_padding(self):
        """Test nonzero padding codes are rejected"""
        payload = bytes([0b01_00_00_00])
        with self.assertRaises(TernaryCodeError):
            TernaryMatrix.from_payload(payload, 1, 3)

    def test_payload_length(self):
        """Test a payload of the wrong size is rejected"""
        with self.assertRaises(DimensionMismatchError):
            TernaryMatrix.from_payload(b"\x00", 2, 4)


class TestTsvdFactorization(unittest.TestCase):
    """Test cases for TsvdFactorization"""

    def make(self, **overrides):
        rng = np.random.default_rng(3)
        fields = dict(
            u=random_ternary(rng, 6, 3), s=[1.0, -2.0, 0.5], v=random_ternary(rng, 3, 5),
            theta=0.576, source_shape=(6, 5),
        )
        fields.update(overrides)
        return TsvdFactorization(**fields)

    def test_rank_and_sparsity(self):
        """Test rank and pooled sparsity"""
        f = self.make()
        self.assertEqual(f.rank, 3)
        self.assertAlmostEqual(f.sparsity, f.nnz / (3 * (6 + 5)))

    def test_rank_mismatch(self):
        """Test factors whose ranks disagree are rejected"""
        with self.assertRaises(ValidationError):
            self.make(s=[1.0, 2.0])

    def test_source_shape_mismatch(self):
        """Test factors must span the source shape"""
        with self.assertRaises(ValidationError):
            self.make(source_shape=(5, 6))

    def test_nan_singular_value(self):
        """Test NaN singular values are rejected"""
        with self.assertRaises(ValidationError):
            self.make(s=[1.0, math.nan, 0.5])

    def test_float32_singulars(self):
        """Test rounding S to float32"""
        f = self.make(s=[0.1, 0.2, 0.3])
        rounded = f.with_float32_singulars()
        np.testing.assert_array_equal(rounded.s, np.float32([0.1, 0.2, 0.3]).astype(np.float64))
        self.assertEqual(rounded.u, f.u)

    def test_equality(self):
        """Test value equality"""
        self.assertEqual(self.make(), self.make())
        self.assertNotEqual(self.make(), self.make(theta=0.5))

    def test_group_ranks_must_sum_to_rank(self):
        """Test group ranks have to add up to K"""
        with self.assertRaises(ValidationError):
            self.make(group_ranks=[1, 1])


class TestConvModels(unittest.TestCase):
    """Test cases for ConvSpec and TileSpec"""

    def test_scalar_pairs(self):
        """Test scalar stride and padding expand to pairs"""
        spec = ConvSpec(c_out=4, c_in=2, k1=3, k2=3, stride=2, padding=1)
        self.assertEqual(spec.stride, (2, 2))
        self.assertEqual(spec.padding, (1, 1))
        self.assertEqual(spec.output_size(8, 8), (4, 4))

    def test_groups_must_divide_channels(self):
        """Test channel counts divisible by groups"""
        with self.assertRaises(ValidationError):
            ConvSpec(c_out=4, c_in=3, k1=3, k2=3, groups=2)

    def test_kernel_shape(self):
        """Test grouped kernel shape"""
        spec = ConvSpec(c_out=4, c_in=6, k1=3, k2=5, groups=2)
        self.assertEqual(spec.kernel_shape, (4, 3, 3, 5))

    def test_invalid_stride(self):
        """Test zero stride is rejected"""
        with self.assertRaises(ValidationError):
            ConvSpec(c_out=1, c_in=1, k1=3, k2=3, stride=0)

    def test_tile_label(self):
        """Test tile label"""
        self.assertEqual(TileSpec(tile_h=2, tile_w=3).label, "2x3")
        self.assertEqual(int(FormType.F2), 2)


class TestCostModels(unittest.TestCase):
    """Test cases for CostReport and BaselineSpec"""

    def test_build(self):
        """Test equivalent adds and rates"""
        report = CostReport.build(muls=4, adds=100, d=32, origin_adds=1000)
        self.assertEqual(report.equivalent_adds, 100 + 4 * 30)
        self.assertAlmostEqual(report.compression_rate, 0.22)
        self.assertAlmostEqual(report.acceleration_rate, 1 / 0.22)

    def test_zero_cost(self):
        """Test a free product has infinite acceleration, serialized as None"""
        report = CostReport.build(muls=0, adds=0, d=32, origin_adds=10)
        self.assertTrue(math.isinf(report.acceleration_rate))
        self.assertIsNone(report.as_json()["acceleration_rate"])

    def test_baseline_requires_parameters(self):
        """Test each method carries its parameter"""
        with self.assertRaises(ValidationError):
            BaselineSpec(method=BaselineMethod.SVD)
        with self.assertRaises(ValidationError):
            BaselineSpec(method=BaselineMethod.QUANT)
        with self.assertRaises(ValidationError):
            BaselineSpec(method=BaselineMethod.TSVD, k=4)
        self.assertEqual(BaselineSpec(method=BaselineMethod.PRUNE, r=0.3).parameter, 0.3)


class TestConfigModels(unittest.TestCase):
    """Test cases for DecomposeConfig and StudyConfig"""

    def test_decompose_defaults(self):
        """Test decomposition defaults"""
        cfg = DecomposeConfig()
        self.assertAlmostEqual(cfg.theta, 0.576)
        self.assertEqual(cfg.error_norm, ErrorNorm.SPECTRAL)
        self.assertEqual(cfg.q_policy.mode, QMode.ADAPTIVE)

    def test_tolerance_range(self):
        """Test tol must lie inside (0, 1)"""
        for tol in (0.0, 1.0, -0.5):
            with self.assertRaises(ValidationError):
                DecomposeConfig(tol=tol)

    def test_fixed_policy(self):
        """Test fixed batch size policy"""
        policy = QPolicy.fixed(4)
        self.assertEqual(policy.mode, QMode.FIXED)
        self.assertEqual(policy.q, 4)

    def test_study_presets(self):
        """Test the full-size and quick presets"""
        self.assertEqual(StudyConfig.preset(Preset.PAPER).shape, (512, 256))
        quick = StudyConfig.preset(Preset.QUICK, seed=5)
        self.assertEqual(quick.shape, (128, 64))
        self.assertEqual(quick.seed, 5)

    def test_study_grid_validation(self):
        """Test empty grids and bad tolerances are rejected"""
        with self.assertRaises(ValidationError):
            StudyConfig(tol_grid=[])
        with self.assertRaises(ValidationError):
            StudyConfig(conv_tol_grid=[1.5])
        with self.assertRaises(ValidationError):
            StudyConfig(theta_degrees=[95.0])


if __name__ == "__main__":
    unittest.main()
