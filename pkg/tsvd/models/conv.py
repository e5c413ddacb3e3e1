"""
Convolution geometry models.
"""
from enum import IntEnum
from typing import Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class FormType(IntEnum):
    """
    The four kernel reshapes a convolution is factorized in.

    Attributes:
        F0: [C_out, C_in*K1*K2]; kernel_U = [1, 1], kernel_V = [K1, K2].
        F1: [C_out*K1*K2, C_in]; kernel_U = [K1, K2], kernel_V = [1, 1].
        F2: [C_out*K1, C_in*K2]; kernel_U = [K1, 1], kernel_V = [1, K2].
        F3: [C_out*K2, C_in*K1]; kernel_U = [1, K2], kernel_V = [K1, 1].
    """
    F0 = 0
    F1 = 1
    F2 = 2
    F3 = 3


def _pair(v) -> Tuple[int, int]:
    if isinstance(v, int):
        return (v, v)
    a, b = v
    return (int(a), int(b))


class ConvSpec(BaseModel):
    """
    Geometry of a 2-d convolution without bias.

    Attributes:
        c_out (int): Output channels.
        c_in (int): Input channels.
        k1 (int): Kernel height.
        k2 (int): Kernel width.
        stride (Tuple[int, int]): Per-axis stride.
        dilation (Tuple[int, int]): Per-axis dilation.
        padding (Tuple[int, int]): Per-axis zero padding.
        groups (int): Channel groups; c_in and c_out must be divisible by it.
    """
    model_config = ConfigDict(frozen=True)

    c_out: int = Field(..., ge=1)
    c_in: int = Field(..., ge=1)
    k1: int = Field(..., ge=1)
    k2: int = Field(..., ge=1)
    stride: Tuple[int, int] = (1, 1)
    dilation: Tuple[int, int] = (1, 1)
    padding: Tuple[int, int] = (0, 0)
    groups: int = Field(1, ge=1)

    @field_validator("stride", "dilation", mode="before")
    @classmethod
    def validate_positive_pair(cls, v):
        """Expands scalars and checks every entry is at least one."""
        pair = _pair(v)
        if min(pair) < 1:
            raise ValueError("stride and dilation entries must be >= 1")
        return pair

    @field_validator("padding", mode="before")
    @classmethod
    def validate_padding(cls, v):
        """Expands scalars and rejects negative padding."""
        pair = _pair(v)
        if min(pair) < 0:
            raise ValueError("padding entries must be >= 0")
        return pair

    @model_validator(mode="after")
    def validate_groups(self):
        """Validates that both channel counts split evenly into groups."""
        if self.c_in % self.groups or self.c_out % self.groups:
            raise ValueError("c_in and c_out must be divisible by groups")
        return self

    @property
    def kernel_shape(self) -> Tuple[int, int, int, int]:
        """Shape of the weight tensor, [C_out, C_in/groups, K1, K2]."""
        return (self.c_out, self.c_in // self.groups, self.k1, self.k2)

    def output_size(self, height: int, width: int) -> Tuple[int, int]:
        """
        Spatial size of the output for an input of the given size.

        Args:
            height (int): Input height.
            width (int): Input width.

        Returns:
            Tuple[int, int]: Output (height, width).
        """
        out = []
        for size, k, s, d, p in zip(
            (height, width), (self.k1, self.k2), self.stride, self.dilation, self.padding
        ):
            out.append((size + 2 * p - d * (k - 1) - 1) // s + 1)
        return (out[0], out[1])


class TileSpec(BaseModel):
    """
    Output tile a convolution is unfolded over.

    Attributes:
        tile_h (int): Tile height in output pixels.
        tile_w (int): Tile width in output pixels.
    """
    model_config = ConfigDict(frozen=True)

    tile_h: int = Field(1, ge=1)
    tile_w: int = Field(1, ge=1)

    @property
    def label(self) -> str:
        """Short name like `2x2`."""
        return f"{self.tile_h}x{self.tile_w}"
