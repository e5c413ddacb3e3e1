"""
Ternary matrix and factorization models.
"""
import math
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from tsvd.core.exceptions import DimensionMismatchError, TernaryCodeError
from tsvd.models.conv import ConvSpec, FormType


class ErrorNorm(str, Enum):
    """
    Norm a relative approximation error is measured in.

    Attributes:
        SPECTRAL: Operator 2-norm (largest singular value).
        FROBENIUS: Frobenius norm.
    """
    SPECTRAL = "spectral"
    FROBENIUS = "frobenius"


def _freeze(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _as_codes(value, ndim: int) -> np.ndarray:
    array = np.asarray(value)
    if array.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array of ternary codes, got shape {array.shape}")
    if array.size and not np.isin(array, (-1, 0, 1)).all():
        raise ValueError("ternary entries must be exactly -1, 0 or +1")
    return _freeze(np.array(array, dtype=np.int8, copy=True))


class AngleThreshold(BaseModel):
    """
    Angle threshold of the ternarization.

    Attributes:
        theta (float): Angle in radians, strictly inside (0, pi/2).
        cos_theta (float): Cached cosine of theta.
    """
    model_config = ConfigDict(frozen=True)

    theta: float = Field(..., gt=0.0, lt=math.pi / 2)
    cos_theta: float = 0.0

    @model_validator(mode="before")
    @classmethod
    def fill_cosine(cls, data):
        """Computes the cosine, rejecting a supplied value that disagrees with it."""
        if isinstance(data, dict) and "theta" in data:
            cos_theta = math.cos(float(data["theta"]))
            supplied = data.get("cos_theta")
            if supplied is not None and supplied != cos_theta:
                raise ValueError("cos_theta does not match cos(theta)")
            data = {**data, "cos_theta": cos_theta}
        return data

    @classmethod
    def from_degrees(cls, degrees: float) -> "AngleThreshold":
        """Builds a threshold from an angle in degrees."""
        return cls(theta=math.radians(degrees))

    @property
    def degrees(self) -> float:
        """Angle in degrees."""
        return math.degrees(self.theta)


class TernaryVector(BaseModel):
    """
    A vector with entries in {-1, 0, +1}.

    Attributes:
        entries (np.ndarray): Read-only int8 codes.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    entries: np.ndarray

    @field_validator("entries", mode="before")
    @classmethod
    def validate_entries(cls, v):
        """Validates that every entry is exactly -1, 0 or +1."""
        return _as_codes(v, 1)

    @property
    def length(self) -> int:
        return int(self.entries.shape[0])

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.entries))

    def __eq__(self, other) -> bool:
        if not isinstance(other, TernaryVector):
            return NotImplemented
        return np.array_equal(self.entries, other.entries)


class TernaryMatrix(BaseModel):
    """
    A matrix with entries in {-1, 0, +1} and its 2-bit packed payload.

    The payload stores one 2-bit code per entry (00 = 0, 01 = +1, 10 = -1,
    11 forbidden), row-major, four entries per byte starting at the low bits,
    each row padded with zero codes to a byte boundary.

    Attributes:
        codes (np.ndarray): Read-only int8 array of shape (rows, cols).
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    codes: np.ndarray

    @field_validator("codes", mode="before")
    @classmethod
    def validate_codes(cls, v):
        """Validates that every entry is exactly -1, 0 or +1."""
        return _as_codes(v, 2)

    @classmethod
    def empty(cls, rows: int, cols: int) -> "TernaryMatrix":
        """All-zero matrix of the given shape."""
        return cls(codes=np.zeros((rows, cols), dtype=np.int8))

    @classmethod
    def from_columns(cls, columns: List[np.ndarray], rows: int) -> "TernaryMatrix":
        """Stacks ternary column vectors side by side."""
        if not columns:
            return cls.empty(rows, 0)
        return cls(codes=np.stack(columns, axis=1))

    @classmethod
    def from_rows(cls, rows: List[np.ndarray], cols: int) -> "TernaryMatrix":
        """Stacks ternary row vectors on top of each other."""
        if not rows:
            return cls.empty(0, cols)
        return cls(codes=np.stack(rows, axis=0))

    @property
    def rows(self) -> int:
        return int(self.codes.shape[0])

    @property
    def cols(self) -> int:
        return int(self.codes.shape[1])

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.codes))

    @property
    def sparsity(self) -> float:
        """Nonzero rate nnz / (rows * cols); 0 for an empty matrix."""
        size = self.rows * self.cols
        return self.nnz / size if size else 0.0

    @property
    def row_bytes(self) -> int:
        """Bytes per packed row."""
        return (self.cols + 3) // 4

    def to_dense(self) -> np.ndarray:
        """Decoded matrix as float64."""
        return self.codes.astype(np.float64)

    def transpose(self) -> "TernaryMatrix":
        return TernaryMatrix(codes=self.codes.T)

    def split_signs(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        Splits the matrix into its positive and negative binary parts.

        Returns:
            Tuple[np.ndarray, np.ndarray]: (plus, minus) uint8 {0, 1} arrays with codes == plus - minus.
        """
        return (self.codes > 0).astype(np.uint8), (self.codes < 0).astype(np.uint8)

    def to_payload(self) -> bytes:
        """
        Encodes the matrix into its 2-bit packed payload.

        Returns:
            bytes: rows * row_bytes bytes.
        """
        two_bit = np.where(self.codes == 1, 1, np.where(self.codes == -1, 2, 0)).astype(np.uint8)
        padded = np.zeros((self.rows, self.row_bytes * 4), dtype=np.uint8)
        padded[:, : self.cols] = two_bit
        quads = padded.reshape(self.rows, self.row_bytes, 4)
        packed = quads[..., 0] | (quads[..., 1] << 2) | (quads[..., 2] << 4) | (quads[..., 3] << 6)
        return packed.astype(np.uint8).tobytes()

    @classmethod
    def payload_size(cls, rows: int, cols: int) -> int:
        """Number of payload bytes for a matrix of the given shape."""
        return rows * ((cols + 3) // 4)

    @classmethod
    def from_payload(cls, payload: bytes, rows: int, cols: int, offset: int = 0) -> "TernaryMatrix":
        """
        Decodes a 2-bit packed payload.

        Args:
            payload (bytes): Exactly `payload_size(rows, cols)` bytes.
            rows (int): Number of rows.
            cols (int): Number of columns.
            offset (int): Position of the payload inside its container, used in error messages.

        Returns:
            TernaryMatrix: The decoded matrix.

        Raises:
            TernaryCodeError: If a code 11 or a nonzero padding code is found.
            DimensionMismatchError: If the payload length does not match the shape.
        """
        row_bytes = (cols + 3) // 4
        if len(payload) != rows * row_bytes:
            raise DimensionMismatchError(
                f"payload holds {len(payload)} bytes, expected {rows * row_bytes} for {rows}x{cols}"
            )
        packed = np.frombuffer(payload, dtype=np.uint8).reshape(rows, row_bytes)
        fields = np.stack([(packed >> shift) & 0b11 for shift in (0, 2, 4, 6)], axis=-1)
        fields = fields.reshape(rows, row_bytes * 4)
        bad = fields == 3
        bad[:, cols:] |= fields[:, cols:] != 0
        if bad.any():
            row, col = (int(i) for i in np.argwhere(bad)[0])
            what = "forbidden code 11" if fields[row, col] == 3 else "nonzero row padding"
            raise TernaryCodeError(f"{what} in ternary payload", offset=offset + row * row_bytes + col // 4)
        values = fields[:, :cols]
        codes = np.where(values == 1, 1, np.where(values == 2, -1, 0)).astype(np.int8)
        return cls(codes=codes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TernaryMatrix):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.codes, other.codes)


class TsvdFactorization(BaseModel):
    """
    A Ternary SVD W ~ U diag(S) V with U, V ternary.

    Attributes:
        u (TernaryMatrix): Left factor, shape [M, K].
        s (np.ndarray): Read-only float64 singular values, length K.
        v (TernaryMatrix): Right factor, shape [K, N].
        theta (float): Angle threshold (radians) the factors were ternarized with.
        form (Optional[FormType]): Kernel reshape, for convolution factorizations.
        source_shape (Tuple[int, int]): Shape (M, N) of the factorized matrix.
        conv (Optional[ConvSpec]): Convolution geometry, for convolution factorizations.
        group_ranks (Optional[List[int]]): Rank per channel group when U and V are block diagonal.
        tol_achieved (Optional[float]): Relative error measured when the factorization was produced.
        error_norm (Optional[ErrorNorm]): Norm `tol_achieved` is measured in.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    u: TernaryMatrix
    s: np.ndarray
    v: TernaryMatrix
    theta: float
    form: Optional[FormType] = None
    source_shape: Tuple[int, int]
    conv: Optional[ConvSpec] = None
    group_ranks: Optional[List[int]] = None
    tol_achieved: Optional[float] = None
    error_norm: Optional[ErrorNorm] = None

    @field_validator("s", mode="before")
    @classmethod
    def validate_singulars(cls, v):
        """Validates that the singular values form a NaN-free vector."""
        array = np.array(v, dtype=np.float64, copy=True).reshape(-1)
        if np.isnan(array).any():
            raise ValueError("singular values must not be NaN")
        return _freeze(array)

    @model_validator(mode="after")
    def validate_shapes(self):
        """Validates that u.cols == len(s) == v.rows and the factors span source_shape."""
        k = self.s.shape[0]
        if self.u.cols != k or self.v.rows != k:
            raise DimensionMismatchError(
                f"factor ranks disagree: u has {self.u.cols} columns, s has {k} entries, v has {self.v.rows} rows"
            )
        if (self.u.rows, self.v.cols) != tuple(self.source_shape):
            raise DimensionMismatchError(
                f"factors span {(self.u.rows, self.v.cols)} but source_shape is {tuple(self.source_shape)}"
            )
        if self.group_ranks is not None and sum(self.group_ranks) != k:
            raise DimensionMismatchError("group_ranks must sum to the rank")
        return self

    @property
    def rank(self) -> int:
        return int(self.s.shape[0])

    @property
    def nnz(self) -> int:
        return self.u.nnz + self.v.nnz

    @property
    def sparsity(self) -> float:
        """
        Pooled nonzero rate (nnz(U) + nnz(V)) / (MK + KN); 0 when K = 0.

        For block-diagonal grouped factors only the in-block slots count.
        """
        m, n = self.source_shape
        slots = self.rank * (m + n)
        if self.group_ranks:
            slots /= len(self.group_ranks)
        return self.nnz / slots if slots else 0.0

    def with_float32_singulars(self) -> "TsvdFactorization":
        """Copy whose singular values are rounded to float32, as stored on disk."""
        return self.model_copy(update={"s": _freeze(self.s.astype(np.float32).astype(np.float64))})

    def __eq__(self, other) -> bool:
        if not isinstance(other, TsvdFactorization):
            return NotImplemented
        return (
            self.u == other.u
            and self.v == other.v
            and np.array_equal(self.s, other.s)
            and self.theta == other.theta
            and self.form == other.form
            and tuple(self.source_shape) == tuple(other.source_shape)
            and self.conv == other.conv
            and self.group_ranks == other.group_ranks
            and self.tol_achieved == other.tol_achieved
            and self.error_norm == other.error_norm
        )
