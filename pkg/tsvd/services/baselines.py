"""
Reference compression methods TSVD is compared against.
"""
import math

import numpy as np

from tsvd.core.config import settings
from tsvd.services.decompose import as_matrix


class Baselines:
    """
    Truncated SVD, magnitude pruning and symmetric uniform quantization.
    """

    @staticmethod
    def truncated_svd(w, k: int) -> np.ndarray:
        """
        Best rank-k approximation.

        Args:
            w: Dense matrix.
            k (int): Rank; values above min(M, N) keep every component.

        Returns:
            np.ndarray: The rank-k approximation.
        """
        matrix = as_matrix(w)
        left, sigma, right = np.linalg.svd(matrix, full_matrices=False)
        k = max(0, min(k, sigma.size))
        return (left[:, :k] * sigma[:k]) @ right[:k]

    @staticmethod
    def magnitude_prune(w, r: float) -> np.ndarray:
        """
        Keeps the ceil(r * size) largest-magnitude entries and zeroes the rest.

        Args:
            w: Dense matrix.
            r (float): Kept fraction in [0, 1].

        Returns:
            np.ndarray: The pruned matrix.
        """
        if not 0.0 <= r <= 1.0:
            raise ValueError("r must lie in [0, 1]")
        matrix = as_matrix(w)
        keep = math.ceil(r * matrix.size)
        flat = matrix.reshape(-1)
        out = np.zeros_like(flat)
        if keep:
            idx = np.argsort(-np.abs(flat), kind="stable")[:keep]
            out[idx] = flat[idx]
        return out.reshape(matrix.shape)

    @staticmethod
    def quantize(w, scale: float, d_prime: int) -> np.ndarray:
        """Rounds to the symmetric grid scale * {-(2^(d'-1) - 1), ..., 2^(d'-1) - 1}."""
        qmax = 2 ** (d_prime - 1) - 1
        return np.clip(np.round(w / scale), -qmax, qmax) * scale

    @staticmethod
    def uniform_quantize(w, d_prime: int, d: int = None, grid: int = 100, maxshrink: float = 0.8) -> np.ndarray:
        """
        Per-tensor symmetric uniform quantization to d' bits.

        The clipping range starts at max|w| and is shrunk over `grid` steps
        (up to a `maxshrink` fraction), keeping the scale with the smallest
        squared error. Two bits give the ternary grid {-s, 0, s}.

        Args:
            w: Dense matrix.
            d_prime (int): Target bit-width, at least 2.
            d (int, optional): Source bit-width; d' >= d returns w unchanged. Defaults to settings.DEFAULT_BIT_WIDTH.
            grid (int): Shrink steps.
            maxshrink (float): Largest shrink fraction.

        Returns:
            np.ndarray: The quantized matrix.
        """
        d = settings.DEFAULT_BIT_WIDTH if d is None else d
        if d_prime < 2:
            raise ValueError("d_prime must be >= 2")
        matrix = as_matrix(w)
        if d_prime >= d:
            return matrix.copy()
        xmax = float(np.abs(matrix).max()) if matrix.size else 0.0
        if xmax == 0.0:
            return np.zeros_like(matrix)
        qmax = 2 ** (d_prime - 1) - 1
        best, best_err = None, math.inf
        for i in range(int(maxshrink * grid)):
            scale = (1 - i / grid) * xmax / qmax
            candidate = Baselines.quantize(matrix, scale, d_prime)
            err = float(np.sum((candidate - matrix) ** 2))
            if err < best_err:
                best, best_err = candidate, err
        return best
