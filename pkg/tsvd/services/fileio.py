"""
Binary containers for dense matrices (.fmat) and factorizations (.tsvd),
plus tabular study output.

All integers and reals are little-endian. Every decoding error names the
byte offset where it was detected.
"""
import json
import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from tsvd.core.exceptions import DimensionMismatchError, FileFormatError, InvalidMatrixError, TsvdError
from tsvd.models.conv import FormType
from tsvd.models.files import (
    DTYPE_FLOAT32,
    FMAT_MAGIC,
    FORMAT_VERSION,
    TSVD_MAGIC,
    FmatHeader,
    TsvdHeader,
)
from tsvd.models.ternary import TernaryMatrix, TsvdFactorization

logger = logging.getLogger(__name__)

FMAT_HEADER = struct.Struct("<4sHBBII")
TSVD_PREFIX = struct.Struct("<4sHI")

PathLike = Union[str, Path]


class FileIO:
    """
    Encoders and decoders of the on-disk formats.
    """

    @staticmethod
    def encode_fmat(matrix) -> bytes:
        """
        Serializes a matrix as 32-bit reals.

        Args:
            matrix: 2-d finite array.

        Returns:
            bytes: 16-byte header followed by the row-major payload.
        """
        array = np.asarray(matrix, dtype=np.float32)
        if array.ndim != 2:
            raise DimensionMismatchError(f"expected a matrix, got shape {array.shape}")
        if not np.isfinite(array).all():
            raise InvalidMatrixError("matrix contains non-finite values")
        rows, cols = array.shape
        header = FMAT_HEADER.pack(FMAT_MAGIC, FORMAT_VERSION, DTYPE_FLOAT32, 0, rows, cols)
        return header + array.astype("<f4").tobytes()

    @staticmethod
    def decode_fmat(data: bytes) -> np.ndarray:
        """
        Parses a .fmat byte string.

        Args:
            data (bytes): File contents.

        Returns:
            np.ndarray: float32 matrix.

        Raises:
            FileFormatError: On a bad magic, version, dtype, flags, length or non-finite value.
        """
        if len(data) < FMAT_HEADER.size:
            raise FileFormatError("truncated .fmat header", offset=len(data))
        magic, version, dtype, flags, rows, cols = FMAT_HEADER.unpack_from(data)
        if magic != FMAT_MAGIC:
            raise FileFormatError(f"bad magic {magic!r}, expected {FMAT_MAGIC!r}", offset=0)
        if version != FORMAT_VERSION:
            raise FileFormatError(f"unsupported version {version}", offset=4)
        if dtype != DTYPE_FLOAT32:
            raise FileFormatError(f"unsupported dtype {dtype}", offset=6)
        if flags != 0:
            raise FileFormatError(f"unsupported flags {flags}", offset=7)
        header = FmatHeader(version=version, dtype=dtype, flags=flags, rows=rows, cols=cols)
        payload = data[FMAT_HEADER.size:]
        if len(payload) != header.payload_size:
            offset = FMAT_HEADER.size + min(len(payload), header.payload_size)
            raise FileFormatError(
                f"payload holds {len(payload)} bytes, header needs {header.payload_size}", offset=offset
            )
        values = np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(rows, cols)
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            raise FileFormatError("non-finite matrix entry", offset=FMAT_HEADER.size + 4 * int(bad[0]))
        return values

    @staticmethod
    def encode_tsvd(f: TsvdFactorization) -> bytes:
        """
        Serializes a factorization.

        S is stored as 32-bit reals, so only factorizations whose singular
        values are float32-exact survive a round trip unchanged.

        Args:
            f (TsvdFactorization): The factorization.

        Returns:
            bytes: Prefix, sorted-key JSON header, S, U payload, V payload.
        """
        m, n = f.source_shape
        header = TsvdHeader(
            m=m, n=n, k=f.rank, theta=f.theta, form=int(f.form) if f.form is not None else None,
            conv=f.conv, group_ranks=f.group_ranks, tol_achieved=f.tol_achieved,
            error_norm=f.error_norm, sparsity=f.sparsity,
        )
        data = header.model_dump(mode="json")
        for optional in ("conv", "group_ranks"):
            if data[optional] is None:
                del data[optional]
        blob = json.dumps(data, sort_keys=True, separators=(",", ":")).encode("utf-8")
        return b"".join([
            TSVD_PREFIX.pack(TSVD_MAGIC, FORMAT_VERSION, len(blob)),
            blob,
            f.s.astype("<f4").tobytes(),
            f.u.to_payload(),
            f.v.to_payload(),
        ])

    @staticmethod
    def decode_tsvd(data: bytes) -> TsvdFactorization:
        """
        Parses a .tsvd byte string.

        Args:
            data (bytes): File contents.

        Returns:
            TsvdFactorization: The factorization, S widened to float64.

        Raises:
            FileFormatError: On any malformed field; TernaryCodeError for bad 2-bit codes.
        """
        if len(data) < TSVD_PREFIX.size:
            raise FileFormatError("truncated .tsvd prefix", offset=len(data))
        magic, version, header_len = TSVD_PREFIX.unpack_from(data)
        if magic != TSVD_MAGIC:
            raise FileFormatError(f"bad magic {magic!r}, expected {TSVD_MAGIC!r}", offset=0)
        if version != FORMAT_VERSION:
            raise FileFormatError(f"unsupported version {version}", offset=4)
        start = TSVD_PREFIX.size
        if start + header_len > len(data):
            raise FileFormatError(f"header length {header_len} runs past the end", offset=6)
        try:
            header = TsvdHeader.model_validate(json.loads(data[start:start + header_len].decode("utf-8")))
        except (UnicodeDecodeError, json.JSONDecodeError, ValidationError, TypeError, RecursionError) as e:
            raise FileFormatError(f"invalid header: {e}", offset=start) from e

        offset = start + header_len
        u_size = TernaryMatrix.payload_size(header.m, header.k)
        v_size = TernaryMatrix.payload_size(header.k, header.n)
        expected = offset + 4 * header.k + u_size + v_size
        if len(data) < expected:
            raise FileFormatError(f"file holds {len(data)} bytes, header needs {expected}", offset=len(data))
        if len(data) > expected:
            raise FileFormatError(f"{len(data) - expected} trailing bytes", offset=expected)

        s = np.frombuffer(data, dtype="<f4", count=header.k, offset=offset).astype(np.float64)
        bad = np.flatnonzero(np.isnan(s))
        if bad.size:
            raise FileFormatError("NaN singular value", offset=offset + 4 * int(bad[0]))
        offset += 4 * header.k
        u = TernaryMatrix.from_payload(data[offset:offset + u_size], header.m, header.k, offset=offset)
        offset += u_size
        v = TernaryMatrix.from_payload(data[offset:offset + v_size], header.k, header.n, offset=offset)
        try:
            f = TsvdFactorization(
                u=u, s=s, v=v, theta=header.theta,
                form=FormType(header.form) if header.form is not None else None,
                source_shape=(header.m, header.n), conv=header.conv, group_ranks=header.group_ranks,
                tol_achieved=header.tol_achieved, error_norm=header.error_norm,
            )
        except (ValidationError, TsvdError) as e:
            raise FileFormatError(f"inconsistent header: {e}", offset=start) from e
        if abs(f.sparsity - header.sparsity) > 1e-9:
            raise FileFormatError(
                f"header sparsity {header.sparsity} disagrees with payload sparsity {f.sparsity}", offset=start
            )
        return f

    @staticmethod
    def read_fmat(path: PathLike) -> np.ndarray:
        return FileIO.decode_fmat(Path(path).read_bytes())

    @staticmethod
    def write_fmat(path: PathLike, matrix) -> None:
        Path(path).write_bytes(FileIO.encode_fmat(matrix))
        logger.info(f"Wrote {path}")

    @staticmethod
    def read_tsvd(path: PathLike) -> TsvdFactorization:
        return FileIO.decode_tsvd(Path(path).read_bytes())

    @staticmethod
    def write_tsvd(path: PathLike, f: TsvdFactorization) -> None:
        Path(path).write_bytes(FileIO.encode_tsvd(f))
        logger.info(f"Wrote {path}")

    @staticmethod
    def write_table(path: PathLike, frame: pd.DataFrame) -> None:
        """
        Writes study rows as CSV or, for a `.jsonl` suffix, JSON lines.

        Args:
            path (PathLike): Output file.
            frame (pd.DataFrame): Rows to write.
        """
        path = Path(path)
        if path.suffix == ".jsonl":
            frame.to_json(path, orient="records", lines=True)
        else:
            frame.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
        logger.info(f"Wrote {len(frame)} rows to {path}")
