"""
Addition-only execution of ternary matrices and TSVD factorizations.
"""
from typing import Tuple

import numpy as np

from tsvd.core.config import settings
from tsvd.core.exceptions import DimensionMismatchError, InvalidMatrixError
from tsvd.models.cost import CostReport
from tsvd.models.ternary import TernaryMatrix, TsvdFactorization


def as_vector(x, length: int, name: str = "x") -> np.ndarray:
    """Coerces `x` to a finite float64 vector of the given length."""
    vector = np.asarray(x, dtype=np.float64)
    if vector.ndim != 1 or vector.shape[0] != length:
        raise DimensionMismatchError(f"{name} has shape {vector.shape}, expected ({length},)")
    if not np.isfinite(vector).all():
        raise InvalidMatrixError(f"{name} contains non-finite values")
    return vector


class TernaryOps:
    """
    Multiplication-free kernels.

    A ternary row only ever adds or subtracts inputs, so its product costs
    exactly nnz additions. Accumulation runs in ascending column order so
    results are reproducible bit for bit.
    """

    @staticmethod
    def ternary_matvec(t: TernaryMatrix, x) -> Tuple[np.ndarray, int]:
        """
        Computes y = T x with additions and subtractions only.

        Args:
            t (TernaryMatrix): Ternary operand of shape [rows, cols].
            x: Real vector of length cols.

        Returns:
            Tuple[np.ndarray, int]: The product and the number of additions (nnz of t).

        Raises:
            DimensionMismatchError: If x does not have t.cols entries.
        """
        vector = as_vector(x, t.cols)
        if t.cols == 0:
            return np.zeros(t.rows, dtype=np.float64), 0
        signed = np.where(t.codes > 0, vector, np.where(t.codes < 0, -vector, 0.0))
        y = np.add.accumulate(signed, axis=1)[:, -1]
        return y, t.nnz

    @staticmethod
    def reconstruct(f: TsvdFactorization) -> np.ndarray:
        """
        Dense U diag(S) V.

        Args:
            f (TsvdFactorization): The factorization.

        Returns:
            np.ndarray: float64 matrix of shape source_shape.
        """
        return (f.u.to_dense() * f.s) @ f.v.to_dense()

    @staticmethod
    def apply(f: TsvdFactorization, x, d: int = None) -> Tuple[np.ndarray, CostReport]:
        """
        Computes y = U (diag(S) (V x)) and counts the work.

        Args:
            f (TsvdFactorization): The factorization, source shape [M, N].
            x: Real vector of length N.
            d (int, optional): Bit-width of the cost translation. Defaults to settings.DEFAULT_BIT_WIDTH.

        Returns:
            Tuple[np.ndarray, CostReport]: The product and the counted cost (adds = nnz(U) + nnz(V), muls = K).

        Raises:
            DimensionMismatchError: If x does not have N entries.
        """
        d = settings.DEFAULT_BIT_WIDTH if d is None else d
        m, n = f.source_shape
        inner, v_adds = TernaryOps.ternary_matvec(f.v, as_vector(x, n))
        scaled = f.s * inner
        y, u_adds = TernaryOps.ternary_matvec(f.u, scaled)
        cost = CostReport.build(
            muls=f.rank, adds=u_adds + v_adds, d=d, origin_adds=(d - 1) * m * n, r=f.sparsity, k=f.rank,
        )
        return y, cost
