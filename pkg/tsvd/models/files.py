"""
Header models of the .fmat and .tsvd containers.
"""
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field

from tsvd.models.conv import ConvSpec
from tsvd.models.ternary import ErrorNorm

FMAT_MAGIC = b"FMAT"
TSVD_MAGIC = b"TSVD"
FORMAT_VERSION = 1
DTYPE_FLOAT32 = 0


class FmatHeader(BaseModel):
    """
    Fixed 16-byte header of a dense matrix file.

    Attributes:
        version (int): Format version, must be 1.
        dtype (int): Payload type, 0 for 32-bit reals.
        flags (int): Reserved, must be 0.
        rows (int): Row count.
        cols (int): Column count.
    """
    model_config = ConfigDict(frozen=True)

    version: int = FORMAT_VERSION
    dtype: int = DTYPE_FLOAT32
    flags: int = 0
    rows: int = Field(..., ge=0)
    cols: int = Field(..., ge=0)

    @property
    def payload_size(self) -> int:
        return self.rows * self.cols * 4


class TsvdHeader(BaseModel):
    """
    JSON header of a factorization file.

    Attributes:
        m (int): Rows of the factorized matrix.
        n (int): Columns of the factorized matrix.
        k (int): Rank.
        theta (float): Angle threshold in radians.
        form (Optional[int]): Kernel reshape, for convolutions.
        conv (Optional[ConvSpec]): Convolution geometry, for convolutions.
        group_ranks (Optional[List[int]]): Rank per channel group.
        tol_achieved (Optional[float]): Recorded relative error.
        error_norm (Optional[ErrorNorm]): Norm of `tol_achieved`.
        sparsity (float): Pooled nonzero rate of U and V.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    m: int = Field(..., ge=0)
    n: int = Field(..., ge=0)
    k: int = Field(..., ge=0)
    theta: float
    form: Optional[int] = Field(None, ge=0, le=3)
    conv: Optional[ConvSpec] = None
    group_ranks: Optional[List[int]] = None
    tol_achieved: Optional[float] = None
    error_norm: Optional[ErrorNorm] = None
    sparsity: float = Field(..., ge=0.0, le=1.0)
