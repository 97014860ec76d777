import argparse
import sys

from app.cli.runner import run_from_flags
from app.core.config import settings
from app.core.logging import get_logger, setup_logging

# Initialize logging
setup_logging(settings.LOG_LEVEL)
logger = get_logger("main")

SUBCOMMANDS = {
    "examples": "run a worked-example preset (or 'all')",
    "dtn-eigs": "Steklov eigenvalues of the discrete Dirichlet-to-Neumann graph",
    "dtn-resolvent": "resolvent norms of the DtN graph at s values",
    "converge": "convergence sweep of a sequence preset",
    "semigroup": "semigroup convergence for m_n = m + 1/n",
    "mesh": "write a mesh in the relforms text format",
}


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="TOML file with experiment settings; flags override it")
    parser.add_argument("--tol", type=float, help="rank tolerance for algebraic triples (default RELFORMS_TOL)")
    parser.add_argument("--seed", type=int, help="seed for randomized fixtures")
    parser.add_argument("--out", help="output file (default stdout)")
    parser.add_argument("--format", choices=["csv", "json"])
    parser.add_argument("--metrics-out", dest="metrics_out", help="write Prometheus text metrics here")
    parser.add_argument("--id", help="preset id for 'examples', or 'all'")
    parser.add_argument("--preset", help="sequence preset for 'converge'")
    parser.add_argument("--mesh", help="square:<n>, disk:<level> or file:<path>")
    parser.add_argument("--coefficients", help="JSON coefficient file")
    parser.add_argument("--m", type=float, help="constant potential")
    parser.add_argument("--k", type=int, help="number of eigenvalues")
    parser.add_argument("--s", dest="s_values", type=float, nargs="+", help="resolvent points (A + isI)")
    parser.add_argument("--t", dest="t_values", type=float, nargs="+", help="semigroup times")
    parser.add_argument("--n-max", dest="n_max", type=int, help="sequence length for FEM sequences")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relforms", description="Hidden-compactness forms and DtN experiments")
    sub = parser.add_subparsers(dest="kind", required=True)
    for name, help_text in SUBCOMMANDS.items():
        _common(sub.add_parser(name, help=help_text))
    return parser


def main(argv: list[str] | None = None) -> int:
    args = vars(build_parser().parse_args(argv))
    config_path = args.pop("config")
    logger.debug(f"relforms {args['kind']} started")
    return run_from_flags(args, config_path)


if __name__ == "__main__":
    sys.exit(main())
