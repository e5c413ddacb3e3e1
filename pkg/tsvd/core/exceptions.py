"""
Exception hierarchy for the Ternary SVD toolkit.
"""
from typing import Optional


class TsvdError(Exception):
    """Base class for every error raised by the toolkit."""


class DimensionMismatchError(TsvdError, ValueError):
    """Operand shapes do not conform."""


class InvalidMatrixError(TsvdError, ValueError):
    """A matrix is non-finite, or zero where a nonzero matrix is required."""


class UnsupportedGeometryError(TsvdError, ValueError):
    """A convolution geometry cannot be lowered the requested way."""


class NoTernaryWithinTheta(TsvdError, ValueError):
    """
    No ternary vector lies within the angle threshold of the input vector.

    Attributes:
        best_cosine (float): Largest normalized prefix sum that was reached.
        cos_theta (float): Cosine of the requested threshold.
    """

    def __init__(self, best_cosine: float, cos_theta: float):
        self.best_cosine = best_cosine
        self.cos_theta = cos_theta
        super().__init__(
            f"no ternary vector within threshold: best cosine {best_cosine:.6f} < cos(theta) {cos_theta:.6f}"
        )


class FileFormatError(TsvdError):
    """
    Malformed container bytes.

    Attributes:
        offset (Optional[int]): Byte offset where decoding failed.
    """

    def __init__(self, message: str, offset: Optional[int] = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class TernaryCodeError(FileFormatError):
    """A 2-bit payload holds the forbidden code 11 or dirty row padding."""
