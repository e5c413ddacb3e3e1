"""
Instruction accounting for TSVD and the methods it is compared against.

Every cost is expressed in d-bit additions: a multiply counts as (d - 2)
additions and a dense multiply-accumulate as (d - 1).
"""
import math

import numpy as np

from tsvd.core.config import settings
from tsvd.models.cost import BaselineMethod, BaselineSpec, CostReport
from tsvd.models.ternary import TsvdFactorization

# Winograd F(2x2, 3x3) input and output transforms.
WINOGRAD_BT = np.array(
    [[1, 0, -1, 0], [0, 1, 1, 0], [0, -1, 1, 0], [0, 1, 0, -1]], dtype=np.int8
)
WINOGRAD_AT = np.array([[1, 1, 1, 0], [0, 1, -1, -1]], dtype=np.int8)


class CostModel:
    """
    Closed-form cost translation between compression methods.
    """

    @staticmethod
    def tsvd_cost(m: int, n: int, k: float, r: float, d: int = None) -> CostReport:
        """
        Modeled cost of a rank-k TSVD of an m x n matrix.

        Args:
            m (int): Rows.
            n (int): Columns.
            k (float): Rank; may be fractional to evaluate the critical rank.
            r (float): Pooled sparsity of the ternary factors.
            d (int, optional): Bit-width. Defaults to settings.DEFAULT_BIT_WIDTH.

        Returns:
            CostReport: k multiplies and r * k * (m + n) additions against (d - 1) * m * n.
        """
        d = settings.DEFAULT_BIT_WIDTH if d is None else d
        return CostReport.build(muls=k, adds=r * k * (m + n), d=d, origin_adds=(d - 1) * m * n, r=r, k=k)

    @staticmethod
    def critical_rank(m: int, n: int, d: int = None, r: float = None) -> float:
        """
        Rank at which a TSVD costs as much as the dense product.

        Args:
            m (int): Rows.
            n (int): Columns.
            d (int, optional): Bit-width. Defaults to settings.DEFAULT_BIT_WIDTH.
            r (float, optional): Sparsity. Defaults to settings.DEFAULT_SPARSITY.

        Returns:
            float: (d - 1) * m * n / (d + r * (m + n) - 2).

        Raises:
            ValueError: If the denominator is not positive.
        """
        d = settings.DEFAULT_BIT_WIDTH if d is None else d
        r = settings.DEFAULT_SPARSITY if r is None else r
        denominator = d + r * (m + n) - 2
        if denominator <= 0:
            raise ValueError("critical rank undefined: d + r(m + n) - 2 must be positive")
        return (d - 1) * m * n / denominator

    @staticmethod
    def baseline_cost(spec: BaselineSpec, m: int, n: int, d: int = None) -> CostReport:
        """
        Cost of a compression method on an m x n product.

        Quantized multiplies at width d' are reported directly as their
        (d' - 1) * m * n additions.

        Args:
            spec (BaselineSpec): Method and parameter.
            m (int): Rows.
            n (int): Columns.
            d (int, optional): Bit-width of the reference. Defaults to settings.DEFAULT_BIT_WIDTH.

        Returns:
            CostReport: The method's cost against the dense reference.
        """
        d = settings.DEFAULT_BIT_WIDTH if d is None else d
        origin = (d - 1) * m * n
        if spec.method == BaselineMethod.ORIGIN:
            return CostReport.build(muls=m * n, adds=m * n, d=d, origin_adds=origin)
        if spec.method == BaselineMethod.SVD:
            macs = spec.k * (m + n)
            return CostReport.build(muls=macs, adds=macs, d=d, origin_adds=origin, k=spec.k)
        if spec.method == BaselineMethod.PRUNE:
            macs = spec.r * m * n
            return CostReport.build(muls=macs, adds=macs, d=d, origin_adds=origin, r=spec.r)
        if spec.method == BaselineMethod.QUANT:
            return CostReport.build(muls=0, adds=(spec.d_prime - 1) * m * n, d=d, origin_adds=origin)
        return CostModel.tsvd_cost(m, n, spec.k, spec.r, d)

    @staticmethod
    def sparse_aware_rate(k: float, r: float, d: int, m: int, n: int, r_prime: float) -> float:
        """
        TSVD compression rate of an unfolded convolution matrix.

        The dense reference only pays for the r' fraction of structurally
        nonzero entries of the unfolded matrix.

        Returns:
            float: (k(d - 2) + r k (m + n)) / (r' m n (d - 1)).
        """
        if not 0.0 < r_prime <= 1.0:
            raise ValueError("r_prime must lie in (0, 1]")
        return (k * (d - 2) + r * k * (m + n)) / (r_prime * m * n * (d - 1))

    @staticmethod
    def selfconsistency_check(m: int, n: int, k: float, r: float, d: int) -> bool:
        """
        Checks that the TSVD cost equals 2-bit quantization of both factors,
        thinned by the sparsity r, plus k multiplies for the diagonal scale.
        """
        if k == 0:
            return True
        tsvd = CostModel.tsvd_cost(m, n, k, r, d).equivalent_adds
        two_bit = BaselineSpec(method=BaselineMethod.QUANT, d_prime=2)
        factors = (
            CostModel.baseline_cost(two_bit, m, k, d).equivalent_adds
            + CostModel.baseline_cost(two_bit, k, n, d).equivalent_adds
        )
        composed = r * factors + k * (d - 2)
        return math.isclose(tsvd, composed, rel_tol=1e-12, abs_tol=1e-12)

    @staticmethod
    def factorization_cost(f: TsvdFactorization, d: int = None) -> CostReport:
        """
        Counted cost of an actual factorization.

        Args:
            f (TsvdFactorization): The factorization; grouped factors are priced against the per-group dense cost.
            d (int, optional): Bit-width. Defaults to settings.DEFAULT_BIT_WIDTH.

        Returns:
            CostReport: nnz(U) + nnz(V) additions and K multiplies.
        """
        d = settings.DEFAULT_BIT_WIDTH if d is None else d
        m, n = f.source_shape
        groups = len(f.group_ranks) if f.group_ranks else 1
        return CostReport.build(
            muls=f.rank, adds=f.nnz, d=d, origin_adds=(d - 1) * m * n / groups, r=f.sparsity, k=f.rank,
        )

    @staticmethod
    def winograd_reference(d: int = None) -> CostReport:
        """
        Winograd F(2x2, 3x3) written as a TSVD of the unfolded 2x2-tile matrix.

        U is the output transform A^T (x) A^T, V the input transform
        B^T (x) B^T and the 16 element-wise products are the multiplies. The
        dense reference is the sparse-aware cost of the 4 x 16 unfolded matrix
        (36 structural nonzeros).

        Args:
            d (int, optional): Bit-width. Defaults to settings.DEFAULT_BIT_WIDTH.

        Returns:
            CostReport: The reference point; compression 580/1116 at d = 32.
        """
        d = settings.DEFAULT_BIT_WIDTH if d is None else d
        u = np.kron(WINOGRAD_AT, WINOGRAD_AT)
        v = np.kron(WINOGRAD_BT, WINOGRAD_BT)
        k = v.shape[0]
        adds = int(np.count_nonzero(u) + np.count_nonzero(v))
        structural = 4 * 9
        return CostReport.build(
            muls=k, adds=adds, d=d, origin_adds=structural * (d - 1),
            r=adds / (k * (u.shape[0] + v.shape[1])), k=k,
        )
