"""
Tests for the .fmat/.tsvd containers and table output
"""
import json
import math
import struct
import tempfile
import unittest
from pathlib import Path

import numpy as np
import pandas as pd

from tsvd.core.exceptions import DimensionMismatchError, FileFormatError, InvalidMatrixError, TernaryCodeError
from tsvd.models.conv import ConvSpec, FormType
from tsvd.models.ternary import ErrorNorm, TernaryMatrix, TsvdFactorization
from tsvd.services.fileio import FMAT_HEADER, TSVD_PREFIX, FileIO


def random_fact(rng, m, n, k, **extra):
    return TsvdFactorization(
        u=TernaryMatrix(codes=rng.integers(-1, 2, size=(m, k))),
        s=rng.standard_normal(k).astype(np.float32),
        v=TernaryMatrix(codes=rng.integers(-1, 2, size=(k, n))),
        theta=0.576, source_shape=(m, n), **extra,
    )


def header_length(data: bytes) -> int:
    return TSVD_PREFIX.unpack_from(data)[2]


class TestFmat(unittest.TestCase):
    """Test cases for the dense matrix container"""

    def setUp(self):
        self.rng = np.random.default_rng(0)

    def test_round_trip(self):
        """Test encode then decode is bit-exact on 1000 random matrices"""
        for _ in range(1000):
            rows, cols = (int(v) for v in self.rng.integers(0, 9, size=2))
            w = self.rng.standard_normal((rows, cols)).astype(np.float32)
            decoded = FileIO.decode_fmat(FileIO.encode_fmat(w))
            self.assertEqual(decoded.tobytes(), w.tobytes())
            self.assertEqual(decoded.shape, (rows, cols))

    def test_header_layout(self):
        """Test the 16-byte little-endian header"""
        data = FileIO.encode_fmat(np.ones((2, 3), dtype=np.float32))
        self.assertEqual(data[:4], b"FMAT")
        self.assertEqual(struct.unpack_from("<HBBII", data, 4), (1, 0, 0, 2, 3))
        self.assertEqual(len(data), 16 + 24)

    def test_rejects_non_finite(self):
        """Test encoding NaN or a vector fails"""
        with self.assertRaises(InvalidMatrixError):
            FileIO.encode_fmat(np.array([[np.nan]]))
        with self.assertRaises(DimensionMismatchError):
            FileIO.encode_fmat(np.ones(3))

    def test_error_offsets(self):
        """Test each malformed field reports its byte offset"""
        good = FileIO.encode_fmat(np.ones((2, 2), dtype=np.float32))
        cases = [
            (good[:10], 10),
            (b"XMAT" + good[4:], 0),
            (good[:4] + struct.pack("<H", 2) + good[6:], 4),
            (good[:6] + b"\x01" + good[7:], 6),
            (good[:7] + b"\x01" + good[8:], 7),
            (good[:-4], 16 + 12),
            (good + b"\x00", 16 + 16),
            (good[:16 + 8] + struct.pack("<f", math.inf) + good[16 + 12:], 16 + 8),
        ]
        for data, offset in cases:
            with self.assertRaises(FileFormatError) as ctx:
                FileIO.decode_fmat(data)
            self.assertEqual(ctx.exception.offset, offset)
            self.assertIn(f"offset {offset}", str(ctx.exception))

    def test_fuzzed_headers_only_raise(self):
        """Test random header corruption raises FileFormatError and nothing else"""
        good = FileIO.encode_fmat(self.rng.standard_normal((3, 4)).astype(np.float32))
        for _ in range(300):
            data = bytearray(good)
            pos = int(self.rng.integers(0, FMAT_HEADER.size))
            data[pos] = int(self.rng.integers(0, 256))
            try:
                FileIO.decode_fmat(bytes(data))
            except FileFormatError:
                pass


class TestTsvd(unittest.TestCase):
    """Test cases for the factorization container"""

    def setUp(self):
        self.rng = np.random.default_rng(1)

    def test_round_trip(self):
        """Test encode then decode is bit-exact on 1000 random factorizations"""
        for _ in range(1000):
            m, n, k = (int(v) for v in self.rng.integers(1, 11, size=3))
            f = random_fact(self.rng, m, n, k, tol_achieved=0.01, error_norm=ErrorNorm.SPECTRAL)
            data = FileIO.encode_tsvd(f)
            self.assertEqual(FileIO.decode_tsvd(data), f)
            self.assertEqual(FileIO.encode_tsvd(FileIO.decode_tsvd(data)), data)

    def test_round_trip_conv(self):
        """Test convolution metadata survives"""
        spec = ConvSpec(c_out=4, c_in=2, k1=3, k2=3, stride=2, padding=1, groups=2)
        u = np.zeros((4, 3), dtype=np.int8)
        v = np.zeros((3, 18), dtype=np.int8)
        u[:2, :2] = self.rng.integers(-1, 2, size=(2, 2))
        u[2:, 2:] = self.rng.integers(-1, 2, size=(2, 1))
        v[:2, :9] = self.rng.integers(-1, 2, size=(2, 9))
        v[2:, 9:] = self.rng.integers(-1, 2, size=(1, 9))
        f = TsvdFactorization(
            u=TernaryMatrix(codes=u), s=np.float32([1.5, -0.25, 3.0]), v=TernaryMatrix(codes=v), theta=0.576,
            source_shape=(4, 18), form=FormType.F0, conv=spec, group_ranks=[2, 1],
        )
        self.assertEqual(FileIO.decode_tsvd(FileIO.encode_tsvd(f)), f)

    def test_rank_zero(self):
        """Test an empty factorization"""
        f = random_fact(self.rng, 3, 5, 0)
        self.assertEqual(FileIO.decode_tsvd(FileIO.encode_tsvd(f)), f)

    def test_header_is_sorted_json(self):
        """Test the header is compact sorted-key JSON without absent optional fields"""
        data = FileIO.encode_tsvd(random_fact(self.rng, 4, 3, 2))
        blob = data[TSVD_PREFIX.size:TSVD_PREFIX.size + header_length(data)]
        header = json.loads(blob)
        self.assertEqual(list(header), sorted(header))
        self.assertNotIn("conv", header)
        self.assertNotIn(b" ", blob)
        self.assertEqual((header["m"], header["n"], header["k"]), (4, 3, 2))

    def test_bad_magic_and_version(self):
        """Test prefix errors"""
        data = FileIO.encode_tsvd(random_fact(self.rng, 2, 2, 1))
        with self.assertRaises(FileFormatError) as ctx:
            FileIO.decode_tsvd(b"FMAT" + data[4:])
        self.assertEqual(ctx.exception.offset, 0)
        with self.assertRaises(FileFormatError) as ctx:
            FileIO.decode_tsvd(data[:4] + struct.pack("<H", 9) + data[6:])
        self.assertEqual(ctx.exception.offset, 4)

    def test_truncated_and_trailing(self):
        """Test length errors"""
        data = FileIO.encode_tsvd(random_fact(self.rng, 3, 3, 2))
        with self.assertRaises(FileFormatError):
            FileIO.decode_tsvd(data[:-1])
        with self.assertRaises(FileFormatError) as ctx:
            FileIO.decode_tsvd(data + b"\x00")
        self.assertEqual(ctx.exception.offset, len(data))
        with self.assertRaises(FileFormatError):
            FileIO.decode_tsvd(data[:5])

    def test_forbidden_code(self):
        """Test a code 11 in the U payload"""
        f = random_fact(self.rng, 2, 2, 1)
        data = bytearray(FileIO.encode_tsvd(f))
        u_start = TSVD_PREFIX.size + header_length(data) + 4
        data[u_start] = 0b11
        with self.assertRaises(TernaryCodeError) as ctx:
            FileIO.decode_tsvd(bytes(data))
        self.assertEqual(ctx.exception.offset, u_start)

    def test_nan_singular_value(self):
        """Test NaN in S"""
        data = bytearray(FileIO.encode_tsvd(random_fact(self.rng, 2, 2, 2)))
        s_start = TSVD_PREFIX.size + header_length(data)
        data[s_start + 4:s_start + 8] = struct.pack("<f", math.nan)
        with self.assertRaises(FileFormatError) as ctx:
            FileIO.decode_tsvd(bytes(data))
        self.assertEqual(ctx.exception.offset, s_start + 4)

    def test_invalid_header(self):
        """Test malformed and inconsistent JSON headers"""
        f = random_fact(self.rng, 2, 3, 1)
        data = FileIO.encode_tsvd(f)
        rest = data[TSVD_PREFIX.size + header_length(data):]
        for header in (b"{not json", b'{"m":2}', b'{"extra":1,"k":1,"m":2,"n":3,"sparsity":0.5,"theta":0.5}'):
            with self.assertRaises(FileFormatError) as ctx:
                FileIO.decode_tsvd(TSVD_PREFIX.pack(b"TSVD", 1, len(header)) + header + rest)
            self.assertEqual(ctx.exception.offset, TSVD_PREFIX.size)

    def test_deeply_nested_header(self):
        """Test a header nested past the parser's recursion limit"""
        data = FileIO.encode_tsvd(random_fact(self.rng, 2, 3, 1))
        rest = data[TSVD_PREFIX.size + header_length(data):]
        header = b"[" * 200000 + b"]" * 200000
        with self.assertRaises(FileFormatError) as ctx:
            FileIO.decode_tsvd(TSVD_PREFIX.pack(b"TSVD", 1, len(header)) + header + rest)
        self.assertEqual(ctx.exception.offset, TSVD_PREFIX.size)

    def test_sparsity_mismatch(self):
        """Test a header sparsity that disagrees with the payload"""
        f = random_fact(self.rng, 2, 3, 1)
        data = FileIO.encode_tsvd(f)
        length = header_length(data)
        header = json.loads(data[TSVD_PREFIX.size:TSVD_PREFIX.size + length])
        header["sparsity"] = 0.0 if f.sparsity else 1.0
        blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
        rebuilt = TSVD_PREFIX.pack(b"TSVD", 1, len(blob)) + blob + data[TSVD_PREFIX.size + length:]
        with self.assertRaises(FileFormatError):
            FileIO.decode_tsvd(rebuilt)

    def test_fuzzed_bytes_only_raise(self):
        """Test random corruption raises FileFormatError and nothing else"""
        good = FileIO.encode_tsvd(random_fact(self.rng, 4, 5, 3, tol_achieved=0.1))
        for _ in range(300):
            data = bytearray(good)
            for _ in range(int(self.rng.integers(1, 4))):
                data[int(self.rng.integers(0, len(data)))] = int(self.rng.integers(0, 256))
            try:
                FileIO.decode_tsvd(bytes(data))
            except FileFormatError:
                pass


class TestPaths(unittest.TestCase):
    """Test cases for the file helpers and table output"""

    def test_files_round_trip(self):
        """Test reading back written files"""
        rng = np.random.default_rng(2)
        w = rng.standard_normal((3, 4)).astype(np.float32)
        f = random_fact(rng, 3, 4, 2)
        with tempfile.TemporaryDirectory() as tmp:
            FileIO.write_fmat(Path(tmp) / "w.fmat", w)
            FileIO.write_tsvd(Path(tmp) / "w.tsvd", f)
            np.testing.assert_array_equal(FileIO.read_fmat(Path(tmp) / "w.fmat"), w)
            self.assertEqual(FileIO.read_tsvd(Path(tmp) / "w.tsvd"), f)

    def test_missing_file(self):
        """Test a missing path raises OSError"""
        with self.assertRaises(OSError):
            FileIO.read_fmat("/nonexistent/dir/w.fmat")

    def test_write_table(self):
        """Test CSV and JSON lines output"""
        frame = pd.DataFrame([{"a": 1, "b": 0.5}, {"a": 2, "b": None}])
        with tempfile.TemporaryDirectory() as tmp:
            FileIO.write_table(Path(tmp) / "t.csv", frame)
            FileIO.write_table(Path(tmp) / "t.jsonl", frame)
            self.assertEqual((Path(tmp) / "t.csv").read_text().splitlines()[0], "a,b")
            lines = (Path(tmp) / "t.jsonl").read_text().strip().splitlines()
            self.assertEqual(len(lines), 2)
            self.assertEqual(json.loads(lines[0]), {"a": 1, "b": 0.5})


if __name__ == "__main__":
    unittest.main()
