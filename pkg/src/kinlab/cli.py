"""Command line entry point: ``kinlab <subcommand> --config PATH``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import __version__
from .config import BUNDLED, load_config, with_overrides
from .errors import KinlabError
from .pipeline import Pipeline
from .report import emit_report, render_summary

SUBCOMMANDS = {
    "certify": "certify",
    "build-entropies": "build-entropies",
    "run": "run",
    "analyze": "analyze",
    "decay": "decay",
    "report": "decay",
    "all": "decay",
}

OUT_ENV = "KINLAB_OUT"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="kinlab",
        description="Kinetic-entropy laboratory for 2x2 genuinely nonlinear systems.",
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "certify": "certify hyperbolicity, genuine nonlinearity and convexity",
        "build-entropies": "tabulate both singular-entropy families and local constants",
        "run": "run the viscosity and amplitude ladders",
        "analyze": "kinetic residuals, entropy dissipation and strip balances",
        "decay": "strip iteration, decay ratio and time modulus",
        "report": "write summary.txt and tables from all stages",
        "all": "every stage followed by the report",
    }
    for name, h in helps.items():
        sp = sub.add_parser(name, help=h)
        sp.add_argument("--config", required=True, help=f"TOML file or bundled name ({', '.join(BUNDLED)})")
        sp.add_argument("--out", help=f"output directory (default: config value, or ${OUT_ENV})")
        sp.add_argument("--resolution-scale", type=float, help="refine entropy grid and viscous mesh by this factor")
        sp.add_argument("--seed", type=int, help="seed for the 'random' data shape")
        sp.add_argument("-v", "--verbose", action="store_true", help="log stage progress to stderr")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        out = args.out or os.environ.get(OUT_ENV)
        cfg = with_overrides(cfg, output_dir=out, resolution_scale=args.resolution_scale, seed=args.seed)
        pipe = Pipeline(cfg)
        bundle = pipe.run_all(SUBCOMMANDS[args.command])
        if args.command in ("report", "all"):
            paths = emit_report(bundle, pipe.out)
            print(f"wrote {len(paths)} files to {pipe.out}")
        sys.stdout.write(render_summary(bundle))
    except KinlabError as exc:
        print(f"kinlab: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
