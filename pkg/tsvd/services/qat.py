"""
Recompute policy and straight-through training of TSVD factors.
"""
import logging
import math
from typing import Optional

import numpy as np

from tsvd.core.exceptions import DimensionMismatchError, UnsupportedGeometryError
from tsvd.models.decompose import DecomposeConfig, QPolicy
from tsvd.models.qat import MainTailSplit, QatDemoReport, QatState
from tsvd.models.ternary import AngleThreshold, TernaryMatrix, TsvdFactorization
from tsvd.services.convmap import ConvMapper
from tsvd.services.decompose import TsvdDecomposer, as_matrix
from tsvd.services.ternarize import ternarize_codes
from tsvd.services.ternary_ops import TernaryOps

logger = logging.getLogger(__name__)


class QatTrainer:
    """
    Keeps a TSVD in step with a latent weight that an optimizer updates.

    After every update the old factors are re-fitted, directions that still
    carry more weight than the best new rank-1 direction of the residual are
    kept as the main part, and the decomposition continues from there.
    """

    @staticmethod
    def _rank_one_reference(residual: np.ndarray, theta: float) -> float:
        if not residual.any():
            return 0.0
        cos_theta = AngleThreshold(theta=theta).cos_theta
        left, _, right = np.linalg.svd(residual, full_matrices=False)
        lu, rv = left[:, 0], right[0]
        if lu[np.argmax(np.abs(lu))] < 0:
            lu, rv = -lu, -rv
        tu = TernaryMatrix(codes=ternarize_codes(lu, cos_theta)[:, None])
        tv = TernaryMatrix(codes=ternarize_codes(rv, cos_theta)[None, :])
        s_ref = TsvdDecomposer.solve_singulars(tu, tv, residual)[0]
        return float(abs(s_ref) * math.sqrt(tu.nnz) * math.sqrt(tv.nnz))

    @staticmethod
    def split_main_tail(w_new, u_old: TernaryMatrix, v_old: TernaryMatrix, eta: float,
                        theta: float) -> MainTailSplit:
        """
        Splits old factor directions into a kept main part and a dropped tail.

        Args:
            w_new: Updated weight [M, N].
            u_old (TernaryMatrix): Previous left factor [M, K].
            v_old (TernaryMatrix): Previous right factor [K, N].
            eta (float): Threshold multiplier; infinity keeps nothing.
            theta (float): Angle threshold of the rank-1 reference.

        Returns:
            MainTailSplit: Re-solved S, per-direction scores, the reference and the keep mask.
        """
        target = as_matrix(w_new, "w_new")
        if target.shape != (u_old.rows, v_old.cols):
            raise DimensionMismatchError(f"w_new {target.shape} does not fit factors {u_old.shape}, {v_old.shape}")
        s = TsvdDecomposer.solve_singulars(u_old, v_old, target)
        residual = target - (u_old.to_dense() * s) @ v_old.to_dense()
        reference = QatTrainer._rank_one_reference(residual, theta)
        col_norms = np.sqrt(np.count_nonzero(u_old.codes, axis=0))
        row_norms = np.sqrt(np.count_nonzero(v_old.codes, axis=1))
        # sign of s is interchangeable with the sign of its factor column, so compare magnitudes
        scores = np.abs(s) * col_norms * row_norms
        if math.isinf(eta):
            mask = np.zeros(s.shape[0], dtype=bool)
        else:
            mask = scores > eta * reference
        return MainTailSplit(s=s, scores=scores, reference=reference, eta=eta, mask=mask)

    @staticmethod
    def qat_recompute(w_new, u_old: TernaryMatrix, v_old: TernaryMatrix, eta: float,
                      cfg: Optional[DecomposeConfig] = None) -> TsvdFactorization:
        """
        Refreshes a factorization after the weight moved.

        Args:
            w_new: Updated weight [M, N].
            u_old (TernaryMatrix): Previous left factor.
            v_old (TernaryMatrix): Previous right factor.
            eta (float): Main/tail threshold.
            cfg (Optional[DecomposeConfig]): Decomposition settings, including theta and tol.

        Returns:
            TsvdFactorization: Factors of w_new within cfg.tol unless the rank budget ran out.
        """
        cfg = cfg or DecomposeConfig()
        split = QatTrainer.split_main_tail(w_new, u_old, v_old, eta, cfg.theta)
        u_main = TernaryMatrix(codes=u_old.codes[:, split.mask])
        v_main = TernaryMatrix(codes=v_old.codes[split.mask])
        logger.debug(f"recompute: kept {split.kept}/{u_old.cols} directions, reference={split.reference:.4g}")
        return TsvdDecomposer.tsvd_decompose(w_new, cfg, u0=u_main, v0=v_main).factorization

    @staticmethod
    def init_state(w, eta: float = 1.0, cfg: Optional[DecomposeConfig] = None) -> QatState:
        """Decomposes the initial weight and wraps it in a training state."""
        cfg = cfg or DecomposeConfig()
        fact = TsvdDecomposer.tsvd_decompose(w, cfg).factorization
        return QatState(w=w, fact=fact, eta=eta, config=cfg)

    @staticmethod
    def ste_step(state: QatState, grad_wbar, lr: float) -> QatState:
        """
        One gradient step through the straight-through estimator.

        The gradient with respect to the reconstructed weight is applied to
        the latent weight as is, then the factors are recomputed.

        Args:
            state (QatState): Current state.
            grad_wbar: dL/dW_bar, same shape as the weight.
            lr (float): Step size.

        Returns:
            QatState: The updated state.
        """
        grad = as_matrix(grad_wbar, "grad_wbar")
        if grad.shape != state.w.shape:
            raise DimensionMismatchError(f"gradient {grad.shape} does not match weight {state.w.shape}")
        w_new = state.w - lr * grad
        fact = QatTrainer.qat_recompute(w_new, state.fact.u, state.fact.v, state.eta, state.config)
        return QatState(w=w_new, fact=fact, eta=state.eta, config=state.config)

    @staticmethod
    def conv_qat_recompute(kernel_new, f_old: TsvdFactorization, eta: float,
                           cfg: Optional[DecomposeConfig] = None) -> TsvdFactorization:
        """
        Recompute policy for a convolution kernel.

        The kernel stays in its current form; the form is selected again only
        when no old direction survives the main/tail split.

        Args:
            kernel_new: Updated kernel [C_out, C_in, K1, K2].
            f_old (TsvdFactorization): Previous single-group convolution factorization.
            eta (float): Main/tail threshold.
            cfg (Optional[DecomposeConfig]): Decomposition settings.

        Returns:
            TsvdFactorization: Factors carrying form and geometry.

        Raises:
            UnsupportedGeometryError: If f_old is not a single-group convolution factorization.
        """
        cfg = cfg or DecomposeConfig()
        if f_old.conv is None or f_old.form is None or f_old.conv.groups != 1:
            raise UnsupportedGeometryError("conv recompute needs a single-group convolution factorization")
        matrix = ConvMapper.reshape_kernel(np.asarray(kernel_new, dtype=np.float64), f_old.form)
        split = QatTrainer.split_main_tail(matrix, f_old.u, f_old.v, eta, cfg.theta)
        if split.kept == 0:
            logger.info("Main part empty, selecting the form again")
            _, fact = ConvMapper.select_form(kernel_new, cfg, f_old.conv)
            return fact
        result = TsvdDecomposer.tsvd_decompose(
            matrix, cfg,
            u0=TernaryMatrix(codes=f_old.u.codes[:, split.mask]),
            v0=TernaryMatrix(codes=f_old.v.codes[split.mask]),
        )
        return result.factorization.model_copy(update={"form": f_old.form, "conv": f_old.conv})

    @staticmethod
    def regression_demo(steps: int = 200, eta: float = 1.0, lr: float = 0.005, tol: float = 0.05,
                        seed: int = 0, noise: float = 1.0, theta: float = 0.75) -> QatDemoReport:
        """
        Trains a 16x8 linear map through the recompute policy.

        Minimizes 0.5 * ||W_bar X - T||_F^2 with the analytic gradient
        (W_bar X - T) X^T, where W_bar is the reconstructed TSVD weight.

        Args:
            steps (int): Gradient steps.
            eta (float): Main/tail threshold.
            lr (float): Step size.
            tol (float): Decomposition tolerance of every recompute.
            seed (int): Data seed.
            noise (float): Target noise standard deviation.
            theta (float): Angle threshold; 0.75 rad lies under gamma_n for every factor length up to 32.

        Returns:
            QatDemoReport: Loss history and the comparison with the least-squares optimum.
        """
        rng = np.random.default_rng(seed)
        w_true = rng.standard_normal((16, 8))
        x = rng.standard_normal((8, 64))
        t = w_true @ x + noise * rng.standard_normal((16, 64))
        optimum = float(np.linalg.norm(t @ np.linalg.pinv(x) @ x - t))

        cfg = DecomposeConfig(theta=theta, tol=tol, q_policy=QPolicy.fixed(1), seed=seed)
        state = QatTrainer.init_state(0.1 * rng.standard_normal((16, 8)), eta, cfg)
        losses = []
        for step in range(steps):
            w_bar = TernaryOps.reconstruct(state.fact)
            err = w_bar @ x - t
            state = QatTrainer.ste_step(state, err @ x.T, lr)
            loss = 0.5 * float(np.sum((TernaryOps.reconstruct(state.fact) @ x - t) ** 2))
            losses.append(loss)
            if step % 20 == 0:
                logger.info(f"step {step}: loss={loss:.4f} K={state.fact.rank}")
        final = float(np.linalg.norm(TernaryOps.reconstruct(state.fact) @ x - t))
        return QatDemoReport(
            losses=losses, final_residual=final, optimum_residual=optimum, ratio=final / optimum,
            final_rank=state.fact.rank, final_sparsity=state.fact.sparsity,
        )
