"""
Configuration, trace and result models of the greedy TSVD decomposition.
"""
import math
from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field

from tsvd.core.config import settings
from tsvd.models.ternary import ErrorNorm, TsvdFactorization

__all__ = ["ErrorNorm", "QMode", "QPolicy", "DecomposeConfig", "TraceRecord", "DecomposeTrace", "DecomposeResult"]


class QMode(str, Enum):
    """
    How many singular-vector pairs are ternarized per iteration.

    Attributes:
        FIXED: Always `q` pairs.
        ADAPTIVE: Pick q from the observed residual decay so the run lasts about `min_iters` iterations.
    """
    FIXED = "fixed"
    ADAPTIVE = "adaptive"


class QPolicy(BaseModel):
    """
    Per-iteration batch size policy.

    Attributes:
        mode (QMode): Fixed or adaptive.
        q (int): Batch size in fixed mode.
        min_iters (int): Target iteration count in adaptive mode.
        q_cap (int): Largest batch size in adaptive mode.
    """
    model_config = ConfigDict(frozen=True)

    mode: QMode = QMode.ADAPTIVE
    q: int = Field(1, ge=1)
    min_iters: int = Field(20, ge=1)
    q_cap: int = Field(256, ge=1)

    @classmethod
    def fixed(cls, q: int = 1) -> "QPolicy":
        return cls(mode=QMode.FIXED, q=q)

    @classmethod
    def adaptive(cls, min_iters: int = 20, q_cap: int = 256) -> "QPolicy":
        return cls(mode=QMode.ADAPTIVE, min_iters=min_iters, q_cap=q_cap)


class DecomposeConfig(BaseModel):
    """
    Knobs of `tsvd_decompose`.

    Attributes:
        theta (float): Ternarization angle threshold in radians.
        tol (float): Relative error target, strictly inside (0, 1).
        error_norm (ErrorNorm): Norm the stop condition is measured in.
        q_policy (QPolicy): Batch size policy.
        max_rank (Optional[int]): Rank budget; None derives it from the critical rank.
        max_iters (int): Iteration cap.
        seed (int): Seed of the spectral-norm power method.
        bit_width (int): Bit-width d used for the automatic rank budget.
        sparsity_hint (float): Sparsity r used for the automatic rank budget.
        stall_patience (int): Consecutive non-improving iterations tolerated before stopping.
    """
    model_config = ConfigDict(frozen=True)

    theta: float = Field(default_factory=lambda: settings.DEFAULT_THETA, gt=0.0, lt=math.pi / 2)
    tol: float = Field(0.01, gt=0.0, lt=1.0)
    error_norm: ErrorNorm = ErrorNorm.SPECTRAL
    q_policy: QPolicy = Field(default_factory=QPolicy)
    max_rank: Optional[int] = Field(None, ge=1)
    max_iters: int = Field(10000, ge=1)
    seed: int = 0
    bit_width: int = Field(default_factory=lambda: settings.DEFAULT_BIT_WIDTH, ge=2)
    sparsity_hint: float = Field(default_factory=lambda: settings.DEFAULT_SPARSITY, gt=0.0, le=1.0)
    stall_patience: int = Field(3, ge=1)


class TraceRecord(BaseModel):
    """
    One completed iteration.

    Attributes:
        iter (int): 1-based iteration index.
        k (int): Rank after the iteration.
        residual_frobenius (float): ||R||_F / ||W||_F after the iteration.
        residual_spectral (float): ||R||_2 / ||W||_2 after the iteration.
        q_used (int): Pairs requested this iteration.
        elapsed (float): Seconds since the decomposition started.
    """
    model_config = ConfigDict(frozen=True)

    iter: int
    k: int
    residual_frobenius: float
    residual_spectral: float
    q_used: int
    elapsed: float


class DecomposeTrace(BaseModel):
    """Per-iteration history of a decomposition."""

    records: List[TraceRecord] = Field(default_factory=list)

    def append(self, record: TraceRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def last(self) -> Optional[TraceRecord]:
        return self.records[-1] if self.records else None


class DecomposeResult(BaseModel):
    """
    Outcome of `tsvd_decompose`.

    Attributes:
        factorization (TsvdFactorization): The factors.
        trace (DecomposeTrace): Iteration history.
        achieved_error (float): Relative error in the configured norm.
        converged (bool): True when the tolerance was met.
        non_compressive (bool): True when the rank budget ran out first.
        stalled (bool): True when the residual stopped decreasing.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    factorization: TsvdFactorization
    trace: DecomposeTrace
    achieved_error: float
    converged: bool
    non_compressive: bool = False
    stalled: bool = False

    @property
    def iterations(self) -> int:
        return len(self.trace)
