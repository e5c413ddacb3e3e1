"""
Study configuration models and presets.
"""
import math
from enum import Enum
from typing import List, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

from tsvd.core.config import settings
from tsvd.models.conv import TileSpec
from tsvd.models.cost import BaselineMethod


class Distribution(str, Enum):
    """
    Entry distribution of generated matrices.

    Attributes:
        LAPLACE: Laplace(loc, scale) via inverse CDF.
        GAUSSIAN: Normal(loc, scale).
    """
    LAPLACE = "laplace"
    GAUSSIAN = "gaussian"


class StudyKind(str, Enum):
    TRADEOFF = "tradeoff"
    THETA = "theta"
    CONV = "conv"


class Preset(str, Enum):
    """
    Named study sizes.

    Attributes:
        PAPER: 512x256 matrices with the complete grids.
        QUICK: 128x64 matrices with trimmed grids.
    """
    PAPER = "paper"
    QUICK = "quick"


class StudyConfig(BaseModel):
    """
    Everything a study needs to run deterministically.

    Attributes:
        shape (Tuple[int, int]): Matrix shape (M, N).
        distribution (Distribution): Entry distribution.
        loc (float): Location parameter.
        scale (float): Scale parameter.
        seed (int): Generator seed, recorded in every output row.
        methods (List[BaselineMethod]): Methods of the tradeoff study.
        svd_ranks (List[int]): Truncated SVD ranks.
        prune_rates (List[float]): Kept fractions for pruning.
        quant_bits (List[int]): Quantization bit-widths.
        tol_grid (List[float]): TSVD tolerances of the tradeoff and theta studies.
        theta (float): Angle threshold of the tradeoff and conv studies, radians.
        theta_degrees (List[float]): Angle grid of the theta sweep, degrees.
        kernel_sizes (List[int]): Square kernel sizes of the conv study.
        tiles (List[TileSpec]): Output tiles of the conv study.
        strides (List[int]): Strides of the conv study.
        dilations (List[int]): Dilations of the conv study.
        conv_tol_grid (List[float]): TSVD tolerances of the conv study.
        bit_width (int): Bit-width d of the cost translation.
    """
    model_config = ConfigDict(frozen=True)

    shape: Tuple[int, int] = (512, 256)
    distribution: Distribution = Distribution.LAPLACE
    loc: float = 0.0
    scale: float = Field(1.0, gt=0.0)
    seed: int = 0
    methods: List[BaselineMethod] = Field(
        default_factory=lambda: [BaselineMethod.SVD, BaselineMethod.PRUNE, BaselineMethod.QUANT, BaselineMethod.TSVD]
    )
    svd_ranks: List[int] = Field(default_factory=lambda: [8, 16, 32, 64, 96, 128, 160, 192, 224, 256])
    prune_rates: List[float] = Field(default_factory=lambda: [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0])
    quant_bits: List[int] = Field(default_factory=lambda: [2, 3, 4, 5, 6, 8, 16, 32])
    tol_grid: List[float] = Field(default_factory=lambda: [0.2, 0.1, 0.05, 0.02, 0.01])
    theta: float = Field(default_factory=lambda: settings.DEFAULT_THETA, gt=0.0, lt=math.pi / 2)
    theta_degrees: List[float] = Field(
        default_factory=lambda: [15.0, 20.0, 25.0, 30.0, 33.0, 35.0, 40.0, 45.0, 50.0, 55.0, 60.0]
    )
    kernel_sizes: List[int] = Field(default_factory=lambda: [3, 5, 7])
    tiles: List[TileSpec] = Field(
        default_factory=lambda: [TileSpec(tile_h=1, tile_w=1), TileSpec(tile_h=2, tile_w=2), TileSpec(tile_h=3, tile_w=3)]
    )
    strides: List[int] = Field(default_factory=lambda: [1, 2])
    dilations: List[int] = Field(default_factory=lambda: [1])
    conv_tol_grid: List[float] = Field(default_factory=lambda: [0.2, 0.1, 0.06, 0.04, 0.02, 0.01])
    bit_width: int = Field(default_factory=lambda: settings.DEFAULT_BIT_WIDTH, ge=2)

    @field_validator(
        "methods", "svd_ranks", "prune_rates", "quant_bits", "tol_grid", "theta_degrees",
        "kernel_sizes", "tiles", "strides", "dilations", "conv_tol_grid",
    )
    @classmethod
    def validate_non_empty(cls, v):
        """Validates that every grid has at least one point."""
        if not v:
            raise ValueError("study grids must not be empty")
        return v

    @field_validator("tol_grid", "conv_tol_grid")
    @classmethod
    def validate_tolerances(cls, v: List[float]) -> List[float]:
        if any(not 0.0 < t < 1.0 for t in v):
            raise ValueError("tolerances must lie in (0, 1)")
        return v

    @field_validator("theta_degrees")
    @classmethod
    def validate_angles(cls, v: List[float]) -> List[float]:
        if any(not 0.0 < t < 90.0 for t in v):
            raise ValueError("angles must lie in (0, 90) degrees")
        return v

    @classmethod
    def preset(cls, name: Preset, **overrides) -> "StudyConfig":
        """
        Builds a named preset.

        Args:
            name (Preset): Preset to build.
            **overrides: Field values replacing the preset's.

        Returns:
            StudyConfig: The configuration.
        """
        if Preset(name) == Preset.PAPER:
            return cls(**overrides)
        quick = dict(
            shape=(128, 64),
            svd_ranks=[4, 8, 16, 24, 32, 40, 48, 56, 64],
            tol_grid=[0.2, 0.1, 0.05, 0.01],
            theta_degrees=[15.0, 20.0, 25.0, 30.0, 33.0, 35.0, 40.0, 45.0, 50.0, 60.0],
        )
        quick.update(overrides)
        return cls(**quick)
