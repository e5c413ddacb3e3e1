"""
Deterministic desk-scale studies of the compression/error tradeoff.

Every study returns a pandas DataFrame with one row per grid point; the
seed is recorded in each row and rows come out in a fixed order no matter
how many worker threads ran the grid.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from tsvd.core.config import settings
from tsvd.core.exceptions import NoTernaryWithinTheta
from tsvd.models.conv import ConvSpec
from tsvd.models.cost import BaselineMethod, BaselineSpec
from tsvd.models.decompose import DecomposeConfig, ErrorNorm
from tsvd.models.study import Distribution, StudyConfig
from tsvd.services.baselines import Baselines
from tsvd.services.convmap import ConvMapper
from tsvd.services.costmodel import CostModel
from tsvd.services.decompose import TsvdDecomposer

logger = logging.getLogger(__name__)

TRADEOFF_COLUMNS = [
    "seed", "method", "parameter", "compression_rate", "relative_spectral_error", "rank", "sparsity", "status",
]
THETA_COLUMNS = [
    "seed", "theta_degrees", "theta", "tol", "compression_rate", "sparsity_r", "rank", "achieved_error", "status",
]
CONV_COLUMNS = [
    "seed", "method", "kernel", "stride", "dilation", "tile", "tol", "rank", "sparsity", "r_prime",
    "compression_rate", "error", "status",
]

Row = Dict[str, object]


def generate_matrix(
    shape: Tuple[int, ...], distribution: Distribution = Distribution.LAPLACE,
    loc: float = 0.0, scale: float = 1.0, seed: int = 0,
) -> np.ndarray:
    """
    Seeded float32 random array.

    Laplace samples come from the inverse CDF of a PCG64 uniform on
    [-0.5, 0.5): x = loc - scale * sign(u) * ln(1 - 2|u|).

    Args:
        shape (Tuple[int, ...]): Array shape.
        distribution (Distribution): Laplace or Gaussian.
        loc (float): Location.
        scale (float): Scale (standard deviation for Gaussian).
        seed (int): PCG64 seed.

    Returns:
        np.ndarray: float32 array.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    if Distribution(distribution) == Distribution.GAUSSIAN:
        return (loc + scale * rng.standard_normal(shape)).astype(np.float32)
    u = rng.random(shape) - 0.5
    tail = np.maximum(1.0 - 2.0 * np.abs(u), np.finfo(np.float64).tiny)
    return (loc - scale * np.sign(u) * np.log(tail)).astype(np.float32)


def _run_grid(tasks: List[Callable[[], Row]]) -> List[Row]:
    with ThreadPoolExecutor(max_workers=settings.TSVD_THREADS) as pool:
        return list(pool.map(lambda task: task(), tasks))


def _status(result) -> str:
    if result.converged:
        return "ok"
    return "non_compressive" if result.non_compressive else "stalled"


def _spectral_error(w: np.ndarray, w_hat: np.ndarray, seed: int) -> float:
    return TsvdDecomposer.relative_error(w, w_hat, ErrorNorm.SPECTRAL, seed)


class StudyRunner:
    """
    Runs the tradeoff, angle and convolution-tile studies.
    """

    @staticmethod
    def tradeoff_study(cfg: StudyConfig) -> pd.DataFrame:
        """
        Compression rate against relative spectral error for every method.

        Args:
            cfg (StudyConfig): Matrix, seed and per-method grids.

        Returns:
            pd.DataFrame: TRADEOFF_COLUMNS rows sorted by compression rate.
        """
        w = generate_matrix(cfg.shape, cfg.distribution, cfg.loc, cfg.scale, cfg.seed).astype(np.float64)
        m, n = w.shape
        d = cfg.bit_width

        def baseline_row(spec: BaselineSpec, approx: np.ndarray) -> Row:
            cost = CostModel.baseline_cost(spec, m, n, d)
            return {
                "seed": cfg.seed, "method": spec.method.value, "parameter": spec.parameter,
                "compression_rate": cost.compression_rate,
                "relative_spectral_error": _spectral_error(w, approx, cfg.seed),
                "rank": spec.k, "sparsity": spec.r, "status": "ok",
            }

        def tsvd_row(tol: float) -> Row:
            dcfg = DecomposeConfig(theta=cfg.theta, tol=tol, bit_width=d, seed=cfg.seed)
            try:
                result = TsvdDecomposer.tsvd_decompose(w, dcfg)
            except NoTernaryWithinTheta:
                logger.warning(f"tsvd tol={tol}: no ternary vector within theta")
                return {"seed": cfg.seed, "method": "tsvd", "parameter": tol, "compression_rate": math.nan,
                        "relative_spectral_error": math.nan, "rank": None, "sparsity": None, "status": "no_ternary"}
            fact = result.factorization
            cost = CostModel.factorization_cost(fact, d)
            logger.info(f"tsvd tol={tol}: K={fact.rank} rate={cost.compression_rate:.4f}")
            return {
                "seed": cfg.seed, "method": "tsvd", "parameter": tol,
                "compression_rate": cost.compression_rate,
                "relative_spectral_error": _spectral_error(w, (fact.u.to_dense() * fact.s) @ fact.v.to_dense(), cfg.seed),
                "rank": fact.rank, "sparsity": fact.sparsity,
                "status": _status(result),
            }

        tasks: List[Callable[[], Row]] = []
        for method in cfg.methods:
            if method == BaselineMethod.ORIGIN:
                spec = BaselineSpec(method=method)
                tasks.append(lambda spec=spec: baseline_row(spec, w))
            elif method == BaselineMethod.SVD:
                for k in cfg.svd_ranks:
                    spec = BaselineSpec(method=method, k=k)
                    tasks.append(lambda spec=spec: baseline_row(spec, Baselines.truncated_svd(w, spec.k)))
            elif method == BaselineMethod.PRUNE:
                for r in cfg.prune_rates:
                    spec = BaselineSpec(method=method, r=r)
                    tasks.append(lambda spec=spec: baseline_row(spec, Baselines.magnitude_prune(w, spec.r)))
            elif method == BaselineMethod.QUANT:
                for bits in cfg.quant_bits:
                    spec = BaselineSpec(method=method, d_prime=bits)
                    tasks.append(
                        lambda spec=spec: baseline_row(spec, Baselines.uniform_quantize(w, spec.d_prime, d))
                    )
            else:
                for tol in cfg.tol_grid:
                    tasks.append(lambda tol=tol: tsvd_row(tol))

        logger.info(f"Tradeoff study on {m}x{n} {cfg.distribution.value} matrix: {len(tasks)} grid points")
        frame = pd.DataFrame(_run_grid(tasks), columns=TRADEOFF_COLUMNS)
        return frame.sort_values("compression_rate", kind="stable", na_position="last").reset_index(drop=True)

    @staticmethod
    def theta_sweep(cfg: StudyConfig) -> pd.DataFrame:
        """
        Compression rate and sparsity of TSVD over the angle and tolerance grids.

        Grid points without a ternarization within theta are recorded with
        status `no_ternary`.

        Args:
            cfg (StudyConfig): Matrix, seed, theta_degrees and tol_grid.

        Returns:
            pd.DataFrame: THETA_COLUMNS rows in (theta, tol) grid order.
        """
        if min(cfg.theta_degrees) > 15.0 or max(cfg.theta_degrees) < 60.0:
            logger.warning("theta grid does not cover 15 to 60 degrees")
        w = generate_matrix(cfg.shape, cfg.distribution, cfg.loc, cfg.scale, cfg.seed).astype(np.float64)
        m, n = w.shape

        def point(degrees: float, tol: float) -> Row:
            theta = math.radians(degrees)
            row: Row = {"seed": cfg.seed, "theta_degrees": degrees, "theta": theta, "tol": tol}
            dcfg = DecomposeConfig(theta=theta, tol=tol, bit_width=cfg.bit_width, seed=cfg.seed)
            try:
                result = TsvdDecomposer.tsvd_decompose(w, dcfg)
            except NoTernaryWithinTheta:
                logger.warning(f"theta={degrees} tol={tol}: no ternary vector within theta")
                row.update(compression_rate=math.nan, sparsity_r=math.nan, rank=None,
                           achieved_error=math.nan, status="no_ternary")
                return row
            fact = result.factorization
            status = _status(result)
            row.update(
                compression_rate=CostModel.factorization_cost(fact, cfg.bit_width).compression_rate,
                sparsity_r=fact.sparsity, rank=fact.rank, achieved_error=result.achieved_error, status=status,
            )
            logger.info(f"theta={degrees} tol={tol}: K={fact.rank} r={fact.sparsity:.4f} status={status}")
            return row

        tasks = [
            (lambda degrees=degrees, tol=tol: point(degrees, tol))
            for degrees in cfg.theta_degrees for tol in cfg.tol_grid
        ]
        logger.info(f"Theta sweep on {m}x{n} matrix: {len(tasks)} grid points")
        return pd.DataFrame(_run_grid(tasks), columns=THETA_COLUMNS)

    @staticmethod
    def conv_tile_study(cfg: StudyConfig) -> pd.DataFrame:
        """
        Sparse-aware compression of single-channel convolutions over tiles.

        Each kernel size gets one seeded kernel; every (stride, dilation,
        tile) geometry is unfolded and decomposed at each tolerance. A fixed
        Winograd F(2x2, 3x3) reference row closes the table.

        Args:
            cfg (StudyConfig): Seed, kernel sizes, tiles, strides, dilations and conv_tol_grid.

        Returns:
            pd.DataFrame: CONV_COLUMNS rows in grid order.
        """
        d = cfg.bit_width

        def point(size: int, stride: int, dilation: int, tile, tol: float) -> Row:
            spec = ConvSpec(c_out=1, c_in=1, k1=size, k2=size, stride=stride, dilation=dilation)
            kernel = generate_matrix(spec.kernel_shape, cfg.distribution, cfg.loc, cfg.scale, cfg.seed + size)
            matrix, r_prime = ConvMapper.unfold_tile(spec, kernel.astype(np.float64), tile)
            row: Row = {
                "seed": cfg.seed, "method": "tsvd", "kernel": size, "stride": stride, "dilation": dilation,
                "tile": tile.label, "tol": tol, "r_prime": r_prime,
            }
            dcfg = DecomposeConfig(theta=cfg.theta, tol=tol, bit_width=d, seed=cfg.seed)
            try:
                result = TsvdDecomposer.tsvd_decompose(matrix, dcfg)
            except NoTernaryWithinTheta:
                row.update(rank=None, sparsity=math.nan, compression_rate=math.nan, error=math.nan,
                           status="no_ternary")
                return row
            fact = result.factorization
            mm, nn = matrix.shape
            row.update(
                rank=fact.rank, sparsity=fact.sparsity,
                compression_rate=CostModel.sparse_aware_rate(fact.rank, fact.sparsity, d, mm, nn, r_prime),
                error=result.achieved_error,
                status=_status(result),
            )
            return row

        tasks = [
            (lambda size=size, stride=stride, dilation=dilation, tile=tile, tol=tol:
             point(size, stride, dilation, tile, tol))
            for size in cfg.kernel_sizes for stride in cfg.strides for dilation in cfg.dilations
            for tile in cfg.tiles for tol in cfg.conv_tol_grid
        ]
        logger.info(f"Conv tile study: {len(tasks)} grid points")
        rows = _run_grid(tasks)
        winograd = CostModel.winograd_reference(d)
        rows.append({
            "seed": cfg.seed, "method": "winograd", "kernel": 3, "stride": 1, "dilation": 1, "tile": "2x2",
            "tol": 0.0, "rank": int(winograd.k), "sparsity": winograd.r, "r_prime": 36 / 64,
            "compression_rate": winograd.compression_rate, "error": 0.0, "status": "ok",
        })
        return pd.DataFrame(rows, columns=CONV_COLUMNS)

    @staticmethod
    def rate_at_error(rows: pd.DataFrame, target: float, error_column: str = "relative_spectral_error",
                      **filters) -> float:
        """
        Smallest compression rate among rows whose error is at most `target`.

        Args:
            rows (pd.DataFrame): Study output.
            target (float): Error budget.
            error_column (str): Column holding the error.
            **filters: Column equality filters, e.g. method="svd".

        Returns:
            float: The rate, or NaN when no row qualifies.
        """
        mask = (rows[error_column] <= target) & rows["compression_rate"].notna()
        for column, value in filters.items():
            mask &= rows[column] == value
        if "status" in rows:
            mask &= rows["status"] != "no_ternary"
        selected = rows.loc[mask, "compression_rate"]
        return float(selected.min()) if not selected.empty else math.nan

    @staticmethod
    def best_theta(rows: pd.DataFrame, tol: float) -> Optional[float]:
        """Angle in degrees with the smallest compression rate among converged rows at `tol`."""
        selected = rows[(rows["tol"] == tol) & (rows["status"] == "ok")]
        if selected.empty:
            return None
        return float(selected.loc[selected["compression_rate"].idxmin(), "theta_degrees"])
