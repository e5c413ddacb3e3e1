"""
Ternary SVD command-line front end
"""
import argparse
import json
import logging
import math
import sys
from typing import List, Optional

import numpy as np
from dotenv import load_dotenv
from pydantic import ValidationError

# Load environment overrides before the settings are built
load_dotenv()

from tsvd.core.config import get_settings  # noqa: E402
from tsvd.core.exceptions import (  # noqa: E402
    DimensionMismatchError,
    FileFormatError,
    InvalidMatrixError,
    NoTernaryWithinTheta,
)
from tsvd.models.decompose import DecomposeConfig, ErrorNorm, QPolicy  # noqa: E402
from tsvd.models.study import Distribution, Preset, StudyConfig, StudyKind  # noqa: E402
from tsvd.services.costmodel import CostModel  # noqa: E402
from tsvd.services.decompose import TsvdDecomposer  # noqa: E402
from tsvd.services.fileio import FileIO  # noqa: E402
from tsvd.services.qat import QatTrainer  # noqa: E402
from tsvd.services.studies import StudyRunner, generate_matrix  # noqa: E402
from tsvd.services.ternarize import gamma_table  # noqa: E402
from tsvd.services.ternary_ops import TernaryOps  # noqa: E402

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_IO = 1
EXIT_INPUT = 2
EXIT_NON_COMPRESSIVE = 3


def _emit(payload: dict) -> None:
    """Writes one JSON document to stdout, mapping non-finite floats to null."""
    clean = {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in payload.items()}
    print(json.dumps(clean, sort_keys=True))


def cmd_decompose(args: argparse.Namespace) -> int:
    """Decomposes a .fmat matrix and writes the factorization."""
    w = FileIO.read_fmat(args.input).astype(np.float64)
    cfg = DecomposeConfig(
        theta=args.theta, tol=args.tol, error_norm=ErrorNorm(args.norm), max_rank=args.max_rank,
        seed=args.seed, bit_width=args.d,
        q_policy=QPolicy.fixed(args.q) if args.q else QPolicy.adaptive(),
    )
    result = TsvdDecomposer.tsvd_decompose(w, cfg)
    fact = result.factorization.with_float32_singulars()
    achieved = TsvdDecomposer.relative_error(w, TernaryOps.reconstruct(fact), cfg.error_norm, cfg.seed)
    fact = fact.model_copy(update={"tol_achieved": achieved})
    converged = result.converged and achieved <= cfg.tol
    if result.converged and not converged:
        logger.warning(f"float32 singular values raise the error to {achieved:.4g} > tol {cfg.tol}")
    FileIO.write_tsvd(args.out, fact)
    cost = CostModel.factorization_cost(fact, args.d)
    _emit({
        "k": fact.rank,
        "sparsity": fact.sparsity,
        "achieved_error": achieved,
        "error_norm": cfg.error_norm.value,
        "compression_rate": cost.compression_rate,
        "acceleration_rate": cost.acceleration_rate,
        "iterations": result.iterations,
        "converged": converged,
        "stalled": result.stalled,
        "flagged_non_compressive": result.non_compressive,
    })
    if args.strict and result.non_compressive:
        logger.error("Rank budget exhausted before reaching the tolerance")
        return EXIT_NON_COMPRESSIVE
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    """Replays a factorization against a matrix and reports errors and costs."""
    fact = FileIO.read_tsvd(args.fact)
    w = FileIO.read_fmat(args.input).astype(np.float64)
    if w.shape != tuple(fact.source_shape):
        raise DimensionMismatchError(f"matrix {w.shape} does not match factorization {tuple(fact.source_shape)}")
    m, n = w.shape
    w_hat = TernaryOps.reconstruct(fact)
    rng = np.random.default_rng(args.seed)
    counted = None
    for _ in range(args.probes):
        _, counted = TernaryOps.apply(fact, rng.standard_normal(n), args.d)
    structural = CostModel.factorization_cost(fact, args.d)
    modeled = CostModel.tsvd_cost(m, n, fact.rank, fact.sparsity, args.d)
    counts_match = counted is None or (counted.adds == structural.adds and counted.muls == structural.muls)
    _emit({
        "k": fact.rank,
        "sparsity": fact.sparsity,
        "recorded_error": fact.tol_achieved,
        "achieved_error": TsvdDecomposer.relative_error(w, w_hat, fact.error_norm or ErrorNorm.SPECTRAL, args.seed),
        "spectral_error": TsvdDecomposer.relative_error(w, w_hat, ErrorNorm.SPECTRAL, args.seed),
        "frobenius_error": TsvdDecomposer.relative_error(w, w_hat, ErrorNorm.FROBENIUS, args.seed),
        "d": args.d,
        "counted_adds": counted.adds if counted else None,
        "counted_muls": counted.muls if counted else None,
        "structural_adds": structural.adds,
        "structural_muls": structural.muls,
        "counts_match": counts_match,
        "modeled_adds": modeled.adds,
        "modeled_equivalent_adds": modeled.equivalent_adds,
        "compression_rate": modeled.compression_rate,
        "acceleration_rate": modeled.acceleration_rate,
        "critical_rank": CostModel.critical_rank(m, n, args.d, fact.sparsity) if fact.rank else None,
        "selfconsistent": CostModel.selfconsistency_check(m, n, fact.rank, fact.sparsity, args.d),
    })
    return EXIT_OK


def cmd_study(args: argparse.Namespace) -> int:
    """Runs one study preset and writes its table."""
    overrides = {"seed": args.seed} if args.seed is not None else {}
    cfg = StudyConfig.preset(Preset(args.preset), **overrides)
    runner = {
        StudyKind.TRADEOFF: StudyRunner.tradeoff_study,
        StudyKind.THETA: StudyRunner.theta_sweep,
        StudyKind.CONV: StudyRunner.conv_tile_study,
    }[StudyKind(args.study)]
    frame = runner(cfg)
    FileIO.write_table(args.out, frame)
    _emit({"study": args.study, "preset": args.preset, "rows": len(frame), "out": str(args.out)})
    return EXIT_OK


def cmd_gamma(args: argparse.Namespace) -> int:
    """Prints the existence bound table with the cos(pi/4) boundary marked."""
    if args.n_max < 1:
        raise ValueError("--n-max must be >= 1")
    table = gamma_table(args.n_max)
    boundary = max((n for n, g in table if g >= math.cos(math.pi / 4)), default=0)
    print("n\tgamma")
    for n, g in table:
        marker = "\t<- last n with gamma >= cos(pi/4)" if n == boundary else ""
        print(f"{n}\t{g:.9f}{marker}")
    return EXIT_OK


def cmd_qat_demo(args: argparse.Namespace) -> int:
    """Trains the toy regression through the recompute policy."""
    report = QatTrainer.regression_demo(
        steps=args.steps, eta=args.eta, lr=args.lr, tol=args.tol, seed=args.seed, theta=args.theta,
    )
    print("step\tloss")
    for step, loss in enumerate(report.losses, start=1):
        print(f"{step}\t{loss:.6f}")
    print(f"final_residual\t{report.final_residual:.6f}")
    print(f"optimum_residual\t{report.optimum_residual:.6f}")
    print(f"ratio\t{report.ratio:.6f}")
    return EXIT_OK


def cmd_generate(args: argparse.Namespace) -> int:
    """Writes a seeded random matrix."""
    w = generate_matrix((args.rows, args.cols), Distribution(args.dist), args.loc, args.scale, args.seed)
    FileIO.write_fmat(args.out, w)
    _emit({"rows": args.rows, "cols": args.cols, "dist": args.dist, "seed": args.seed, "out": str(args.out)})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    """Builds the argument parser with one subcommand per operation."""
    settings = get_settings()
    parser = argparse.ArgumentParser(prog="tsvd", description=f"{settings.APP_NAME} {settings.APP_VERSION}")
    parser.add_argument("--log-level", default=settings.LOG_LEVEL, help="stderr log level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="factorize a .fmat matrix into a .tsvd file")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tol", type=float, default=0.01)
    p.add_argument("--theta", type=float, default=settings.DEFAULT_THETA, help="radians")
    p.add_argument("--norm", choices=[e.value for e in ErrorNorm], default=ErrorNorm.SPECTRAL.value)
    p.add_argument("--max-rank", type=int, default=None)
    p.add_argument("--q", type=int, default=None, help="fixed batch size; adaptive when omitted")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--d", type=int, default=settings.DEFAULT_BIT_WIDTH)
    p.add_argument("--strict", action="store_true", help="exit 3 when the rank budget runs out")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("eval", help="report errors and costs of a factorization")
    p.add_argument("--fact", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--d", type=int, default=settings.DEFAULT_BIT_WIDTH)
    p.add_argument("--probes", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("study", help="run a study and write CSV or JSON lines")
    p.add_argument("--study", choices=[e.value for e in StudyKind], required=True)
    p.add_argument("--preset", choices=[e.value for e in Preset], default=Preset.QUICK.value)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("gamma", help="print the ternarization existence bound")
    p.add_argument("--n-max", type=int, default=60)
    p.set_defaults(func=cmd_gamma)

    p = sub.add_parser("qat-demo", help="train a toy regression through the recompute policy")
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--lr", type=float, default=0.005)
    p.add_argument("--tol", type=float, default=0.05)
    p.add_argument("--theta", type=float, default=0.75, help="radians")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_qat_demo)

    p = sub.add_parser("generate", help="write a seeded random .fmat matrix")
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--cols", type=int, required=True)
    p.add_argument("--dist", choices=[e.value for e in Distribution], default=Distribution.LAPLACE.value)
    p.add_argument("--loc", type=float, default=0.0)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Entry point.

    Args:
        argv (Optional[List[str]]): Arguments without the program name; sys.argv when None.

    Returns:
        int: 0 on success, 1 on I/O or format errors, 2 on invalid input, 3 for a
        non-compressive result under --strict.
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (FileFormatError, OSError) as e:
        logger.error(str(e))
        return EXIT_IO
    except (NoTernaryWithinTheta, DimensionMismatchError, InvalidMatrixError, ValidationError, ValueError) as e:
        logger.error(str(e))
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
