"""
Greedy direct transition of a dense matrix to TSVD form.
"""
import logging
import math
import time
from typing import List, Optional, Tuple

import numpy as np

from tsvd.core.config import settings
from tsvd.core.exceptions import DimensionMismatchError, InvalidMatrixError
from tsvd.models.decompose import (
    DecomposeConfig,
    DecomposeResult,
    DecomposeTrace,
    ErrorNorm,
    QMode,
    QPolicy,
    TraceRecord,
)
from tsvd.models.ternary import AngleThreshold, TernaryMatrix, TsvdFactorization
from tsvd.services.costmodel import CostModel
from tsvd.services.ternarize import ternarize_codes

logger = logging.getLogger(__name__)


def as_matrix(w, name: str = "w") -> np.ndarray:
    """Coerces `w` to a finite float64 matrix."""
    matrix = np.asarray(w, dtype=np.float64)
    if matrix.ndim != 2:
        raise DimensionMismatchError(f"{name} must be 2-d, got shape {matrix.shape}")
    if not np.isfinite(matrix).all():
        raise InvalidMatrixError(f"{name} contains non-finite values")
    return matrix


def spectral_norm(a: np.ndarray, seed: int = 0, max_iters: int = None, tol: float = None) -> float:
    """
    Largest singular value by power iteration on the smaller Gram matrix.

    Args:
        a (np.ndarray): Matrix.
        seed (int): Seed of the Gaussian start vector.
        max_iters (int, optional): Iteration cap. Defaults to settings.POWER_ITERATIONS.
        tol (float, optional): Relative eigenvalue change that stops the loop. Defaults to settings.POWER_TOL.

    Returns:
        float: Estimate of ||a||_2.
    """
    max_iters = settings.POWER_ITERATIONS if max_iters is None else max_iters
    tol = settings.POWER_TOL if tol is None else tol
    if a.size == 0 or not a.any():
        return 0.0
    op = a if a.shape[1] <= a.shape[0] else a.T
    x = np.random.default_rng(seed).standard_normal(op.shape[1])
    x /= np.linalg.norm(x)
    eigenvalue = 0.0
    for _ in range(max_iters):
        y = op @ x
        estimate = float(y @ y)
        z = op.T @ y
        norm = np.linalg.norm(z)
        if norm == 0.0:
            break
        x = z / norm
        if eigenvalue and abs(estimate - eigenvalue) <= tol * estimate:
            eigenvalue = estimate
            break
        eigenvalue = estimate
    return math.sqrt(eigenvalue)


def _sign_normalize(u: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    if u[np.argmax(np.abs(u))] < 0:
        return -u, -v
    return u, v


class TsvdDecomposer:
    """
    Greedy residual pursuit with ternary singular vectors.

    Each iteration ternarizes the top singular-vector pairs of the residual,
    appends them to U and V, re-solves every singular value by least squares
    and recomputes the residual.
    """

    @staticmethod
    def solve_singulars(u: TernaryMatrix, v: TernaryMatrix, w, rcond: float = None) -> np.ndarray:
        """
        Least-squares singular values for fixed ternary factors.

        S = pinv((U^T U) * (V V^T)) diag(U^T W V^T), the minimum-norm minimizer of
        ||W - U diag(S) V||_F.

        Args:
            u (TernaryMatrix): Left factor [M, K].
            v (TernaryMatrix): Right factor [K, N].
            w: Dense target [M, N].
            rcond (float, optional): Gram eigenvalue cutoff relative to the largest. Defaults to settings.PINV_RCOND.

        Returns:
            np.ndarray: S of length K.

        Raises:
            DimensionMismatchError: If the shapes do not conform.
        """
        rcond = settings.PINV_RCOND if rcond is None else rcond
        target = as_matrix(w)
        if u.cols != v.rows or target.shape != (u.rows, v.cols):
            raise DimensionMismatchError(
                f"cannot solve S for u {u.shape}, v {v.shape} against w {target.shape}"
            )
        if u.cols == 0:
            return np.zeros(0, dtype=np.float64)
        ud, vd = u.to_dense(), v.to_dense()
        gram = (ud.T @ ud) * (vd @ vd.T)
        rhs = ((ud.T @ target) * vd).sum(axis=1)
        return np.linalg.pinv(gram, rcond=rcond, hermitian=True) @ rhs

    @staticmethod
    def relative_error(w, w_hat, norm: ErrorNorm = ErrorNorm.SPECTRAL, seed: int = 0) -> float:
        """
        ||w - w_hat|| / ||w|| in the chosen norm.

        Args:
            w: Reference matrix.
            w_hat: Approximation of the same shape.
            norm (ErrorNorm): Spectral (power iteration) or Frobenius.
            seed (int): Power iteration seed.

        Returns:
            float: Relative error.

        Raises:
            DimensionMismatchError: If the shapes differ.
            InvalidMatrixError: If w has zero norm.
        """
        ref, approx = as_matrix(w), as_matrix(w_hat, "w_hat")
        if ref.shape != approx.shape:
            raise DimensionMismatchError(f"shapes differ: {ref.shape} vs {approx.shape}")
        if ErrorNorm(norm) == ErrorNorm.FROBENIUS:
            denominator = np.linalg.norm(ref)
            numerator = np.linalg.norm(ref - approx)
        else:
            denominator = spectral_norm(ref, seed)
            numerator = spectral_norm(ref - approx, seed)
        if denominator == 0.0:
            raise InvalidMatrixError("relative error of a zero reference matrix is undefined")
        return float(numerator / denominator)

    @staticmethod
    def q_from_estimate(k_est: float, policy: QPolicy) -> int:
        """Batch size clamp(ceil(k_est / min_iters), 1, q_cap)."""
        if policy.mode == QMode.FIXED:
            return policy.q
        if not math.isfinite(k_est):
            return policy.q_cap
        return int(min(max(math.ceil(k_est / policy.min_iters), 1), policy.q_cap))

    @staticmethod
    def adaptive_q(trace: DecomposeTrace, cfg: DecomposeConfig) -> int:
        """
        Batch size for the next iteration.

        Extrapolates the log-linear decay of the relative Frobenius residual
        seen so far, K_est = K * ln(tol) / ln(e), and spreads K_est over
        `min_iters` iterations. The first iteration always uses q = 1.

        Args:
            trace (DecomposeTrace): Completed iterations.
            cfg (DecomposeConfig): Tolerance and policy.

        Returns:
            int: Pairs to ternarize next.
        """
        policy = cfg.q_policy
        if policy.mode == QMode.FIXED:
            return policy.q
        last = trace.last
        if last is None or last.k == 0 or not 0.0 < last.residual_frobenius < 1.0:
            return 1
        k_est = last.k * math.log(cfg.tol) / math.log(last.residual_frobenius)
        return TsvdDecomposer.q_from_estimate(k_est, policy)

    @staticmethod
    def resolve_max_rank(m: int, n: int, cfg: DecomposeConfig) -> int:
        """Configured rank budget, or the critical rank at the hinted sparsity."""
        if cfg.max_rank is not None:
            return cfg.max_rank
        return max(1, math.ceil(CostModel.critical_rank(m, n, cfg.bit_width, cfg.sparsity_hint)))

    @staticmethod
    def tsvd_decompose(
        w,
        cfg: Optional[DecomposeConfig] = None,
        u0: Optional[TernaryMatrix] = None,
        v0: Optional[TernaryMatrix] = None,
    ) -> DecomposeResult:
        """
        Decomposes a dense matrix into TSVD form.

        Args:
            w: Finite nonzero matrix [M, N].
            cfg (Optional[DecomposeConfig]): Settings; defaults apply when omitted.
            u0 (Optional[TernaryMatrix]): Initial left factor to continue from.
            v0 (Optional[TernaryMatrix]): Initial right factor to continue from.

        Returns:
            DecomposeResult: Factors, trace and stop flags.

        Raises:
            InvalidMatrixError: If w is zero or non-finite.
            DimensionMismatchError: If the initial factors do not fit w.
            NoTernaryWithinTheta: If a singular vector has no ternarization within theta.
        """
        cfg = cfg or DecomposeConfig()
        target = as_matrix(w)
        m, n = target.shape
        if target.size == 0 or not target.any():
            raise InvalidMatrixError("cannot decompose a zero or empty matrix")
        cos_theta = AngleThreshold(theta=cfg.theta).cos_theta
        max_rank = TsvdDecomposer.resolve_max_rank(m, n, cfg)

        u_cols: List[np.ndarray] = []
        v_rows: List[np.ndarray] = []
        if (u0 is None) != (v0 is None):
            raise DimensionMismatchError("u0 and v0 must be given together")
        if u0 is not None:
            if u0.rows != m or v0.cols != n or u0.cols != v0.rows:
                raise DimensionMismatchError(f"initial factors {u0.shape}, {v0.shape} do not fit {target.shape}")
            u_cols = [u0.codes[:, j].copy() for j in range(u0.cols)]
            v_rows = [v0.codes[j].copy() for j in range(v0.rows)]

        def factors() -> Tuple[TernaryMatrix, TernaryMatrix]:
            return TernaryMatrix.from_columns(u_cols, m), TernaryMatrix.from_rows(v_rows, n)

        u, v = factors()
        s = TsvdDecomposer.solve_singulars(u, v, target)
        residual = target - (u.to_dense() * s) @ v.to_dense()
        sigma_w = np.linalg.svd(target, compute_uv=False)[0]
        frob_w = np.linalg.norm(target)
        left, sigma, right = np.linalg.svd(residual, full_matrices=False)

        def current_error() -> Tuple[float, float, float]:
            frob = float(np.linalg.norm(residual) / frob_w)
            spec = float(sigma[0] / sigma_w) if sigma.size else 0.0
            return frob, spec, spec if cfg.error_norm == ErrorNorm.SPECTRAL else frob

        logger.info(f"Decomposing {m}x{n} matrix: theta={cfg.theta:.4f}, tol={cfg.tol}, max_rank={max_rank}")
        trace = DecomposeTrace()
        start = time.perf_counter()
        best_frob, _, _ = current_error()
        no_progress = 0
        converged = non_compressive = stalled = False
        iteration = 0

        while True:
            _, _, error = current_error()
            if error <= cfg.tol:
                converged = True
                break
            if len(u_cols) >= max_rank:
                non_compressive = True
                logger.warning(f"Rank budget {max_rank} exhausted at error {error:.4g} > tol {cfg.tol}")
                break
            if no_progress >= cfg.stall_patience:
                stalled = True
                logger.warning(f"Residual stopped decreasing after {iteration} iterations")
                break
            if iteration >= cfg.max_iters:
                logger.warning(f"Iteration cap {cfg.max_iters} reached at error {error:.4g}")
                break

            q = TsvdDecomposer.adaptive_q(trace, cfg)
            q = min(q, max_rank - len(u_cols), sigma.size)
            seen = set()
            for j in range(q):
                if sigma[j] <= 0.0:
                    break
                lu, rv = _sign_normalize(left[:, j], right[j])
                tu = ternarize_codes(lu, cos_theta)
                tv = ternarize_codes(rv, cos_theta)
                key = (tu.tobytes(), tv.tobytes())
                if key in seen:
                    continue
                seen.add(key)
                u_cols.append(tu)
                v_rows.append(tv)
            if not seen:
                stalled = True
                break

            u, v = factors()
            s = TsvdDecomposer.solve_singulars(u, v, target)
            residual = target - (u.to_dense() * s) @ v.to_dense()
            left, sigma, right = np.linalg.svd(residual, full_matrices=False)
            iteration += 1
            frob, spec, _ = current_error()
            trace.append(TraceRecord(
                iter=iteration, k=len(u_cols), residual_frobenius=frob, residual_spectral=spec,
                q_used=q, elapsed=time.perf_counter() - start,
            ))
            logger.debug(f"iter {iteration}: K={len(u_cols)} q={q} frob={frob:.6g} spec={spec:.6g}")
            if frob < best_frob:
                best_frob = frob
                no_progress = 0
            else:
                no_progress += 1

        _, _, achieved = current_error()
        fact = TsvdFactorization(
            u=u, s=s, v=v, theta=cfg.theta, source_shape=(m, n),
            tol_achieved=achieved, error_norm=cfg.error_norm,
        )
        logger.info(
            f"Decomposition finished: K={fact.rank}, sparsity={fact.sparsity:.4f}, "
            f"error={achieved:.4g}, iterations={iteration}"
        )
        return DecomposeResult(
            factorization=fact, trace=trace, achieved_error=achieved,
            converged=converged, non_compressive=non_compressive, stalled=stalled,
        )

    @staticmethod
    def contraction_bound(theta: float, m: int, n: int) -> float:
        """Per-step Frobenius contraction sqrt(1 - cos^2(2 theta) / min(m, n)) of the weak policy."""
        return math.sqrt(1.0 - math.cos(2.0 * theta) ** 2 / min(m, n))

    @staticmethod
    def weak_policy_step(r, theta: float) -> Tuple[np.ndarray, float]:
        """
        One rank-1 step that fits only the new singular value.

        Args:
            r: Nonzero residual matrix.
            theta (float): Angle threshold in radians.

        Returns:
            Tuple[np.ndarray, float]: The next residual and ||r_next||_F / ||r||_F.

        Raises:
            InvalidMatrixError: If r is zero.
            NoTernaryWithinTheta: If a singular vector has no ternarization within theta.
        """
        residual = as_matrix(r, "r")
        norm = np.linalg.norm(residual)
        if norm == 0.0:
            raise InvalidMatrixError("weak policy step needs a nonzero residual")
        if theta >= math.pi / 4:
            logger.warning(f"theta={theta:.4f} >= pi/4: the contraction bound does not apply")
        cos_theta = AngleThreshold(theta=theta).cos_theta
        left, _, right = np.linalg.svd(residual, full_matrices=False)
        lu, rv = _sign_normalize(left[:, 0], right[0])
        tu = ternarize_codes(lu, cos_theta).astype(np.float64)
        tv = ternarize_codes(rv, cos_theta).astype(np.float64)
        s_bar = (tu @ residual @ tv) / ((tu @ tu) * (tv @ tv))
        nxt = residual - s_bar * np.outer(tu, tv)
        return nxt, float(np.linalg.norm(nxt) / norm)
