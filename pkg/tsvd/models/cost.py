"""
Cost accounting models.
"""
import math
from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class CostReport(BaseModel):
    """
    Instruction cost of one matrix-vector product.

    A d-bit multiply is counted as (d - 2) additions, so
    `equivalent_adds == adds + muls * (d - 2)`. The compression rate is the
    equivalent cost over the dense product's `(d - 1) * M * N`, and the
    acceleration rate is its inverse.

    Attributes:
        muls (float): Multiplies.
        adds (float): Additions.
        equivalent_adds (float): Additions after translating multiplies.
        origin_adds (float): Equivalent additions of the reference dense product.
        compression_rate (float): equivalent_adds / origin_adds; inf over an empty reference unless free.
        acceleration_rate (float): origin_adds / equivalent_adds (inf for a zero-cost product).
        d (int): Bit-width.
        r (Optional[float]): Sparsity of the ternary factors, when it applies.
        k (Optional[float]): Rank, when it applies (fractional for the critical rank).
    """
    model_config = ConfigDict(frozen=True)

    muls: float = Field(..., ge=0)
    adds: float = Field(..., ge=0)
    equivalent_adds: float
    origin_adds: float = Field(..., ge=0)
    compression_rate: float
    acceleration_rate: float
    d: int = Field(..., ge=2)
    r: Optional[float] = None
    k: Optional[float] = None

    @classmethod
    def build(
        cls, muls: float, adds: float, d: int, origin_adds: float,
        r: Optional[float] = None, k: Optional[float] = None,
    ) -> "CostReport":
        """
        Derives the equivalent cost and both rates from raw counts.

        Args:
            muls (float): Multiplies.
            adds (float): Additions.
            d (int): Bit-width.
            origin_adds (float): Equivalent cost of the dense reference.
            r (Optional[float]): Factor sparsity.
            k (Optional[float]): Rank.

        Returns:
            CostReport: The completed report.
        """
        equivalent = adds + muls * (d - 2)
        if origin_adds > 0:
            compression = equivalent / origin_adds
        else:
            # empty reference: free when the factors cost nothing too
            compression = 0.0 if equivalent == 0 else math.inf
        acceleration = 1.0 / compression if compression > 0 else math.inf
        return cls(
            muls=muls, adds=adds, equivalent_adds=equivalent, origin_adds=origin_adds,
            compression_rate=compression, acceleration_rate=acceleration, d=d, r=r, k=k,
        )

    def as_json(self) -> dict:
        """Plain dict with infinite rates mapped to None."""
        data = self.model_dump()
        for key in ("compression_rate", "acceleration_rate"):
            if math.isinf(data[key]):
                data[key] = None
        return data


class BaselineMethod(str, Enum):
    """
    Compression methods a TSVD is compared against.

    Attributes:
        ORIGIN: Uncompressed dense product.
        SVD: Truncated SVD at rank k.
        PRUNE: Magnitude pruning keeping a fraction r of the weights.
        QUANT: Uniform quantization to d_prime bits.
        TSVD: Ternary SVD at rank k with sparsity r.
    """
    ORIGIN = "origin"
    SVD = "svd"
    PRUNE = "prune"
    QUANT = "quant"
    TSVD = "tsvd"


class BaselineSpec(BaseModel):
    """
    A compression method and its parameter.

    Attributes:
        method (BaselineMethod): Which method.
        k (Optional[int]): Rank for SVD and TSVD.
        r (Optional[float]): Kept fraction for pruning, factor sparsity for TSVD.
        d_prime (Optional[int]): Bit-width for quantization.
    """
    model_config = ConfigDict(frozen=True)

    method: BaselineMethod
    k: Optional[int] = Field(None, ge=0)
    r: Optional[float] = Field(None, ge=0.0, le=1.0)
    d_prime: Optional[int] = Field(None, ge=2)

    @model_validator(mode="after")
    def validate_parameters(self):
        """Validates that each method carries the parameters it needs."""
        if self.method in (BaselineMethod.SVD, BaselineMethod.TSVD) and self.k is None:
            raise ValueError(f"{self.method.value} requires k")
        if self.method in (BaselineMethod.PRUNE, BaselineMethod.TSVD) and self.r is None:
            raise ValueError(f"{self.method.value} requires r")
        if self.method == BaselineMethod.QUANT and self.d_prime is None:
            raise ValueError("quant requires d_prime")
        return self

    @property
    def parameter(self) -> Optional[float]:
        """The swept parameter of the method."""
        return {
            BaselineMethod.ORIGIN: None,
            BaselineMethod.SVD: self.k,
            BaselineMethod.PRUNE: self.r,
            BaselineMethod.QUANT: self.d_prime,
            BaselineMethod.TSVD: self.k,
        }[self.method]
