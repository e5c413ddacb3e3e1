"""
Quantization-aware training state.
"""
from typing import List

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from tsvd.models.decompose import DecomposeConfig
from tsvd.models.ternary import TsvdFactorization


class MainTailSplit(BaseModel):
    """
    Intermediate quantities of the main/tail split.

    A factor direction k is kept when `scores[k] > eta * reference`.

    Attributes:
        s (np.ndarray): Singular values re-solved on the old factors.
        scores (np.ndarray): |s_k| * ||u_k|| * ||v_k|| per direction.
        reference (float): |S'| ||U'|| ||V'|| of the rank-1 TSVD of the residual.
        eta (float): Threshold multiplier.
        mask (np.ndarray): Boolean keep mask.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    s: np.ndarray
    scores: np.ndarray
    reference: float
    eta: float
    mask: np.ndarray

    @property
    def kept(self) -> int:
        return int(np.count_nonzero(self.mask))


class QatState(BaseModel):
    """
    A latent full-precision weight and its current TSVD.

    Attributes:
        w (np.ndarray): Latent weight updated by the optimizer.
        fact (TsvdFactorization): Factorization used in the forward pass.
        eta (float): Main/tail threshold.
        config (DecomposeConfig): Decomposition settings of the session.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    w: np.ndarray
    fact: TsvdFactorization
    eta: float = Field(1.0, ge=0.0)
    config: DecomposeConfig = Field(default_factory=DecomposeConfig)

    @field_validator("w", mode="before")
    @classmethod
    def validate_weight(cls, v):
        """Copies the weight into a read-only 2-d float64 array."""
        array = np.array(v, dtype=np.float64, copy=True)
        if array.ndim != 2:
            raise ValueError("w must be a matrix")
        array.setflags(write=False)
        return array

    @property
    def theta(self) -> float:
        return self.config.theta


class QatDemoReport(BaseModel):
    """
    Outcome of the toy regression trained through the recompute policy.

    Attributes:
        losses (List[float]): Loss 0.5 * ||W_bar X - T||_F^2 after each step.
        final_residual (float): ||W_bar X - T||_F at the end.
        optimum_residual (float): ||W* X - T||_F of the unconstrained least-squares weight.
        ratio (float): final_residual / optimum_residual.
        final_rank (int): Rank of the final factorization.
        final_sparsity (float): Pooled sparsity of the final factorization.
    """
    losses: List[float]
    final_residual: float
    optimum_residual: float
    ratio: float
    final_rank: int
    final_sparsity: float
