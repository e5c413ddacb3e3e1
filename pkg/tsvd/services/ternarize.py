"""
Optimal prefix ternarization of a real vector and its existence bound.
"""
import logging
import math
from typing import List, Tuple, Union

import numpy as np

from tsvd.core.exceptions import InvalidMatrixError, NoTernaryWithinTheta
from tsvd.models.ternary import AngleThreshold, TernaryVector

logger = logging.getLogger(__name__)


def _threshold(theta: Union[AngleThreshold, float]) -> AngleThreshold:
    return theta if isinstance(theta, AngleThreshold) else AngleThreshold(theta=theta)


def ternarize_codes(x: np.ndarray, cos_theta: float) -> np.ndarray:
    """
    Sparsest sign-matched ternary vector within the angle threshold.

    Sorts magnitudes in descending order, finds the first prefix k whose
    normalized sum `cumsum(|x|)[k] / (sqrt(k) * ||x||)` reaches cos(theta),
    then keeps every entry whose magnitude is at least the k-th largest.

    Args:
        x (np.ndarray): Nonzero finite vector.
        cos_theta (float): Cosine of the threshold.

    Returns:
        np.ndarray: int8 codes.

    Raises:
        NoTernaryWithinTheta: If no prefix reaches cos(theta).
    """
    magnitude = np.abs(x)
    order = np.sort(magnitude)[::-1]
    norm = np.linalg.norm(x)
    prefix = np.cumsum(order) / (np.sqrt(np.arange(1, x.shape[0] + 1)) * norm)
    passing = np.flatnonzero(prefix >= cos_theta)
    if passing.size == 0:
        raise NoTernaryWithinTheta(float(prefix.max()), cos_theta)
    cut = order[passing[0]]
    codes = np.where(x >= 0, 1, -1).astype(np.int8)
    codes[magnitude < cut] = 0
    return codes


def ternarize(x, theta: Union[AngleThreshold, float]) -> TernaryVector:
    """
    Ternarizes a vector under an angle threshold.

    Args:
        x: Nonzero finite real vector.
        theta (Union[AngleThreshold, float]): Threshold, or angle in radians.

    Returns:
        TernaryVector: Vector t with t[i] in {0, sign(x[i])} and cos(x, t) >= cos(theta).

    Raises:
        InvalidMatrixError: If x is zero, empty or non-finite.
        NoTernaryWithinTheta: If no ternary vector of the prefix family meets the threshold.
    """
    vector = np.asarray(x, dtype=np.float64).reshape(-1)
    if vector.size == 0 or not np.isfinite(vector).all() or not vector.any():
        raise InvalidMatrixError("ternarize needs a nonzero finite vector")
    return TernaryVector(entries=ternarize_codes(vector, _threshold(theta).cos_theta))


def gamma_bound(n: int) -> float:
    """
    Worst-case cosine between a unit vector of length n and its best ternarization.

    gamma_n = 1 / sqrt(sum_{k=1..n} (sqrt(k) - sqrt(k - 1))^2).

    Args:
        n (int): Vector length, at least 1.

    Returns:
        float: gamma_n.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    k = np.arange(1, n + 1, dtype=np.float64)
    steps = np.sqrt(k) - np.sqrt(k - 1)
    return float(1.0 / math.sqrt(np.sum(steps * steps)))


def gamma_table(n_max: int) -> List[Tuple[int, float]]:
    """Rows (n, gamma_n) for n = 1..n_max."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    k = np.arange(1, n_max + 1, dtype=np.float64)
    steps = np.sqrt(k) - np.sqrt(k - 1)
    gammas = 1.0 / np.sqrt(np.cumsum(steps * steps))
    return [(int(n), float(g)) for n, g in zip(k, gammas)]


def largest_n_within(cos_theta: float, n_max: int = 10000) -> int:
    """Largest n <= n_max with gamma_n >= cos_theta, or 0 if there is none."""
    table = gamma_table(n_max)
    eligible = [n for n, g in table if g >= cos_theta]
    if eligible and eligible[-1] == n_max:
        logger.warning(f"gamma_n stays above {cos_theta:.6f} up to n_max={n_max}")
    return eligible[-1] if eligible else 0
