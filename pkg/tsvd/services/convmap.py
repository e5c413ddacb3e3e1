"""
Convolution lowering: kernel reshapes, tile unfolding, factored application
and form selection.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from tsvd.core.config import settings
from tsvd.core.exceptions import DimensionMismatchError, UnsupportedGeometryError
from tsvd.models.conv import ConvSpec, FormType, TileSpec
from tsvd.models.decompose import DecomposeConfig, DecomposeResult, DecomposeTrace, ErrorNorm
from tsvd.models.ternary import TernaryMatrix, TsvdFactorization
from tsvd.services.costmodel import CostModel
from tsvd.services.decompose import TsvdDecomposer

logger = logging.getLogger(__name__)

# Axis order of the [C_out, C_in, K1, K2] kernel before flattening into (rows, cols).
_LAYOUT = {
    FormType.F0: ((0, 1, 2, 3), 1),
    FormType.F1: ((0, 2, 3, 1), 3),
    FormType.F2: ((0, 2, 1, 3), 2),
    FormType.F3: ((0, 3, 1, 2), 2),
}


def _block_diag(blocks: List[np.ndarray]) -> np.ndarray:
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols), dtype=blocks[0].dtype)
    r = c = 0
    for b in blocks:
        out[r:r + b.shape[0], c:c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out


class ConvMapper:
    """
    Maps convolution kernels to matrices and runs factored convolutions.

    Kernels are [C_out, C_in / groups, K1, K2]; inputs are [C, H, W].
    """

    @staticmethod
    def reshape_kernel(kernel, form: FormType) -> np.ndarray:
        """
        Rearranges a kernel into one of the four matrix forms.

        Args:
            kernel: 4-d array [C_out, C_in, K1, K2].
            form (FormType): Target form.

        Returns:
            np.ndarray: F0 [C_out, C_in*K1*K2], F1 [C_out*K1*K2, C_in],
            F2 [C_out*K1, C_in*K2] or F3 [C_out*K2, C_in*K1].

        Raises:
            DimensionMismatchError: If the kernel is not 4-d.
        """
        k = np.asarray(kernel)
        if k.ndim != 4:
            raise DimensionMismatchError(f"kernel must be 4-d, got shape {k.shape}")
        axes, split = _LAYOUT[FormType(form)]
        moved = k.transpose(axes)
        rows = int(np.prod(moved.shape[:split]))
        return moved.reshape(rows, -1)

    @staticmethod
    def inverse_reshape(matrix, form: FormType, kernel_shape: Tuple[int, int, int, int]) -> np.ndarray:
        """Restores the [C_out, C_in, K1, K2] kernel from its matrix form."""
        axes, _ = _LAYOUT[FormType(form)]
        moved_shape = tuple(kernel_shape[a] for a in axes)
        m = np.asarray(matrix)
        if m.size != int(np.prod(kernel_shape)):
            raise DimensionMismatchError(f"matrix of shape {m.shape} cannot hold a {kernel_shape} kernel")
        return m.reshape(moved_shape).transpose(np.argsort(axes))

    @staticmethod
    def conv2d(x, kernel, stride=(1, 1), dilation=(1, 1), padding=(0, 0)) -> np.ndarray:
        """
        Direct 2-d cross-correlation without bias.

        Args:
            x: Input [C, H, W].
            kernel: Weights [O, C, kh, kw].
            stride: Per-axis stride.
            dilation: Per-axis dilation.
            padding: Per-axis zero padding.

        Returns:
            np.ndarray: Output [O, Ho, Wo].
        """
        x = np.asarray(x, dtype=np.float64)
        kernel = np.asarray(kernel, dtype=np.float64)
        if x.ndim != 3 or kernel.ndim != 4 or kernel.shape[1] != x.shape[0]:
            raise DimensionMismatchError(f"cannot convolve input {x.shape} with kernel {kernel.shape}")
        (s1, s2), (d1, d2), (p1, p2) = stride, dilation, padding
        kh, kw = kernel.shape[2:]
        padded = np.pad(x, ((0, 0), (p1, p1), (p2, p2)))
        span_h, span_w = (kh - 1) * d1 + 1, (kw - 1) * d2 + 1
        if padded.shape[1] < span_h or padded.shape[2] < span_w:
            raise UnsupportedGeometryError(f"kernel span {span_h}x{span_w} exceeds padded input {padded.shape[1:]}")
        windows = sliding_window_view(padded, (span_h, span_w), axis=(1, 2))
        windows = windows[:, ::s1, ::s2, ::d1, ::d2]
        return np.einsum("chwab,ocab->ohw", windows, kernel, optimize=True)

    @staticmethod
    def _group_factors(f: TsvdFactorization) -> List[Tuple[TernaryMatrix, np.ndarray, TernaryMatrix]]:
        ranks = f.group_ranks or [f.rank]
        groups = len(ranks)
        m, n = f.source_shape
        mg, ng = m // groups, n // groups
        parts, offset = [], 0
        for g, k in enumerate(ranks):
            u = TernaryMatrix(codes=f.u.codes[g * mg:(g + 1) * mg, offset:offset + k])
            v = TernaryMatrix(codes=f.v.codes[offset:offset + k, g * ng:(g + 1) * ng])
            parts.append((u, f.s[offset:offset + k], v))
            offset += k
        return parts

    @staticmethod
    def reconstruct_kernel(f: TsvdFactorization) -> np.ndarray:
        """
        Kernel [C_out, C_in / groups, K1, K2] encoded by a convolution factorization.

        Raises:
            UnsupportedGeometryError: If f carries no convolution geometry or form.
        """
        if f.conv is None or f.form is None:
            raise UnsupportedGeometryError("factorization has no convolution geometry")
        spec = f.conv
        group_shape = (spec.c_out // spec.groups,) + spec.kernel_shape[1:]
        kernels = [
            ConvMapper.inverse_reshape((u.to_dense() * s) @ v.to_dense(), f.form, group_shape)
            for u, s, v in ConvMapper._group_factors(f)
        ]
        return np.concatenate(kernels, axis=0)

    @staticmethod
    def _apply_single(spec: ConvSpec, form: FormType, u: TernaryMatrix, s: np.ndarray,
                      v: TernaryMatrix, x: np.ndarray) -> np.ndarray:
        c_out, c_in, k1, k2 = spec.c_out // spec.groups, spec.c_in // spec.groups, spec.k1, spec.k2
        k = s.shape[0]
        ud, vd = u.to_dense(), v.to_dense()
        (s1, s2), (d1, d2), (p1, p2) = spec.stride, spec.dilation, spec.padding
        if form == FormType.F0:
            kernel_v = vd.reshape(k, c_in, k1, k2)
            kernel_u = ud.reshape(c_out, k, 1, 1)
            z = ConvMapper.conv2d(x, kernel_v, spec.stride, spec.dilation, spec.padding)
            return ConvMapper.conv2d(z * s[:, None, None], kernel_u)
        if form == FormType.F1:
            kernel_v = vd.reshape(k, c_in, 1, 1)
            kernel_u = ud.reshape(c_out, k1, k2, k).transpose(0, 3, 1, 2)
            z = ConvMapper.conv2d(x, kernel_v)
            return ConvMapper.conv2d(z * s[:, None, None], kernel_u, spec.stride, spec.dilation, spec.padding)
        if form == FormType.F2:
            kernel_v = vd.reshape(k, c_in, 1, k2)
            kernel_u = ud.reshape(c_out, k1, k).transpose(0, 2, 1)[..., None]
            z = ConvMapper.conv2d(x, kernel_v, (1, s2), (1, d2), (0, p2))
            return ConvMapper.conv2d(z * s[:, None, None], kernel_u, (s1, 1), (d1, 1), (p1, 0))
        kernel_v = vd.reshape(k, c_in, k1, 1)
        kernel_u = ud.reshape(c_out, k2, k).transpose(0, 2, 1)[:, :, None, :]
        z = ConvMapper.conv2d(x, kernel_v, (s1, 1), (d1, 1), (p1, 0))
        return ConvMapper.conv2d(z * s[:, None, None], kernel_u, (1, s2), (1, d2), (0, p2))

    @staticmethod
    def apply_factored_conv(spec: ConvSpec, form: FormType, f: TsvdFactorization, x) -> np.ndarray:
        """
        Runs a convolution through its factors.

        V runs as a convolution with kernel_V, diag(S) as a channel-wise
        scale and U as a convolution with kernel_U; grouped factors run
        group by group.

        Args:
            spec (ConvSpec): Convolution geometry.
            form (FormType): Form the factorization was computed in.
            f (TsvdFactorization): Factors of the reshaped kernel.
            x: Input [C_in, H, W].

        Returns:
            np.ndarray: Output [C_out, Ho, Wo].

        Raises:
            DimensionMismatchError: If f or x does not match the geometry.
        """
        form = FormType(form)
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[0] != spec.c_in:
            raise DimensionMismatchError(f"input {x.shape} does not have {spec.c_in} channels")
        group_shape = (spec.c_out // spec.groups,) + spec.kernel_shape[1:]
        expected = ConvMapper.reshape_kernel(np.zeros(group_shape), form).shape
        expected = (expected[0] * spec.groups, expected[1] * spec.groups)
        if tuple(f.source_shape) != expected:
            raise DimensionMismatchError(f"factorization spans {f.source_shape}, form {form.name} needs {expected}")
        parts = ConvMapper._group_factors(f) if spec.groups > 1 else [(f.u, f.s, f.v)]
        if len(parts) != spec.groups:
            raise DimensionMismatchError(f"factorization has {len(parts)} groups, geometry has {spec.groups}")
        c_g = spec.c_in // spec.groups
        outputs = [
            ConvMapper._apply_single(spec, form, u, s, v, x[g * c_g:(g + 1) * c_g])
            for g, (u, s, v) in enumerate(parts)
        ]
        return np.concatenate(outputs, axis=0)

    @staticmethod
    def decompose_conv(kernel, form: FormType, cfg: Optional[DecomposeConfig] = None,
                       spec: Optional[ConvSpec] = None) -> DecomposeResult:
        """
        Decomposes a kernel in one form, group by group.

        Args:
            kernel: Weights [C_out, C_in / groups, K1, K2].
            form (FormType): Reshape to factorize.
            cfg (Optional[DecomposeConfig]): Decomposition settings.
            spec (Optional[ConvSpec]): Geometry; a stride-1 single-group one is derived from the kernel when omitted.

        Returns:
            DecomposeResult: Block-diagonal factors carrying form, geometry and per-group ranks.
        """
        cfg = cfg or DecomposeConfig()
        form = FormType(form)
        k = np.asarray(kernel, dtype=np.float64)
        if spec is None:
            spec = ConvSpec(c_out=k.shape[0], c_in=k.shape[1], k1=k.shape[2], k2=k.shape[3])
        if k.shape != spec.kernel_shape:
            raise DimensionMismatchError(f"kernel shape {k.shape} does not match geometry {spec.kernel_shape}")
        og = spec.c_out // spec.groups
        results = [
            TsvdDecomposer.tsvd_decompose(ConvMapper.reshape_kernel(k[g * og:(g + 1) * og], form), cfg)
            for g in range(spec.groups)
        ]
        facts = [r.factorization for r in results]
        matrix = _block_diag([ConvMapper.reshape_kernel(k[g * og:(g + 1) * og], form) for g in range(spec.groups)])
        u = TernaryMatrix(codes=_block_diag([f.u.codes for f in facts]))
        v = TernaryMatrix(codes=_block_diag([f.v.codes for f in facts]))
        s = np.concatenate([f.s for f in facts])
        recon = (u.to_dense() * s) @ v.to_dense()
        if cfg.error_norm == ErrorNorm.SPECTRAL:
            achieved = float(np.linalg.norm(matrix - recon, 2) / np.linalg.norm(matrix, 2))
        else:
            achieved = float(np.linalg.norm(matrix - recon) / np.linalg.norm(matrix))
        fact = TsvdFactorization(
            u=u, s=s, v=v, theta=cfg.theta, form=form, source_shape=matrix.shape, conv=spec,
            group_ranks=[f.rank for f in facts] if spec.groups > 1 else None,
            tol_achieved=achieved, error_norm=cfg.error_norm,
        )
        trace = DecomposeTrace(records=[rec for r in results for rec in r.trace.records])
        return DecomposeResult(
            factorization=fact, trace=trace, achieved_error=achieved,
            converged=all(r.converged for r in results),
            non_compressive=any(r.non_compressive for r in results),
            stalled=any(r.stalled for r in results),
        )

    @staticmethod
    def select_form(kernel, cfg: Optional[DecomposeConfig] = None,
                    spec: Optional[ConvSpec] = None) -> Tuple[FormType, TsvdFactorization]:
        """
        Decomposes all four forms and keeps the cheapest.

        Candidates run on a thread pool capped by settings.TSVD_THREADS; the
        winner has the smallest counted compression rate among the forms that
        reached cfg.tol, ties going to the lower form. When no form reached
        it, all four compete and a warning is logged.

        Args:
            kernel: Weights [C_out, C_in / groups, K1, K2].
            cfg (Optional[DecomposeConfig]): Decomposition settings.
            spec (Optional[ConvSpec]): Geometry.

        Returns:
            Tuple[FormType, TsvdFactorization]: Winning form and its factors.
        """
        cfg = cfg or DecomposeConfig()
        forms = list(FormType)
        with ThreadPoolExecutor(max_workers=min(len(forms), settings.TSVD_THREADS)) as pool:
            results = list(pool.map(lambda form: ConvMapper.decompose_conv(kernel, form, cfg, spec), forms))
        candidates = [(form, result) for form, result in zip(forms, results) if result.converged]
        if not candidates:
            logger.warning(f"No form reached tol={cfg.tol}; selecting among unconverged forms")
            candidates = list(zip(forms, results))
        best_form, best_fact, best_rate = None, None, None
        for form, result in candidates:
            rate = CostModel.factorization_cost(result.factorization, cfg.bit_width).compression_rate
            logger.debug(f"form {form.name}: K={result.factorization.rank} rate={rate:.4f} "
                         f"converged={result.converged}")
            if best_rate is None or rate < best_rate:
                best_form, best_fact, best_rate = form, result.factorization, rate
        logger.info(f"Selected form {best_form.name} with compression rate {best_rate:.4f}")
        return best_form, best_fact

    @staticmethod
    def tile_positions(spec: ConvSpec, tile: TileSpec) -> List[Tuple[int, int]]:
        """Receptive-field positions (row, col) touched by a tile, row-major, relative to its corner."""
        (s1, s2), (d1, d2) = spec.stride, spec.dilation
        touched = {
            (ti * s1 + a * d1, tj * s2 + b * d2)
            for ti in range(tile.tile_h) for tj in range(tile.tile_w)
            for a in range(spec.k1) for b in range(spec.k2)
        }
        return sorted(touched)

    @staticmethod
    def unfold_tile(spec: ConvSpec, kernel, tile: TileSpec) -> Tuple[np.ndarray, float]:
        """
        Block-cyclic matrix of a convolution over one output tile.

        Rows are outputs (o, ti, tj); columns are inputs (c, position) over
        the positions the tile touches. r' is the fraction of structurally
        nonzero entries.

        Args:
            spec (ConvSpec): Single-group geometry.
            kernel: Weights [C_out, C_in, K1, K2].
            tile (TileSpec): Output tile.

        Returns:
            Tuple[np.ndarray, float]: The unfolded matrix and r'.

        Raises:
            UnsupportedGeometryError: If the convolution is grouped.
        """
        if spec.groups != 1:
            raise UnsupportedGeometryError("tile unfolding needs a single-group convolution")
        k = np.asarray(kernel, dtype=np.float64)
        if k.shape != spec.kernel_shape:
            raise DimensionMismatchError(f"kernel shape {k.shape} does not match geometry {spec.kernel_shape}")
        positions = ConvMapper.tile_positions(spec, tile)
        column = {p: i for i, p in enumerate(positions)}
        (s1, s2), (d1, d2) = spec.stride, spec.dilation
        th, tw, npos = tile.tile_h, tile.tile_w, len(positions)
        matrix = np.zeros((spec.c_out, th, tw, spec.c_in, npos))
        for ti in range(th):
            for tj in range(tw):
                for a in range(spec.k1):
                    for b in range(spec.k2):
                        p = column[(ti * s1 + a * d1, tj * s2 + b * d2)]
                        matrix[:, ti, tj, :, p] = k[:, :, a, b]
        r_prime = (th * tw * spec.k1 * spec.k2) / (th * tw * npos)
        return matrix.reshape(spec.c_out * th * tw, spec.c_in * npos), r_prime
