"""
Main entry point for the layered-fat EIT toolkit.

    python main.py simulate    --config fixtures/disk_homogeneous.json --out out/
    python main.py reconstruct --config fixtures/disk_homogeneous.json --out out/
    python main.py convergence --config fixtures/convergence.json --out out/
    python main.py diagnostics --config fixtures/disk_homogeneous.json --system out/system_n1.npz

Errors are printed as one JSON line on standard error; the exit code tells
the error kind (0 ok, 2 config, 3 data mismatch, 4 resolution, 5 missing
artifact, 1 anything else).
"""
import argparse
import json
import logging
import os
import sys
from typing import List, Optional

from cli.commands import cmd_convergence, cmd_diagnostics, cmd_reconstruct, cmd_simulate
from cli.run_config import load_run_config, parse_centers
from errors import EXIT_INTERNAL, EXIT_OK, EITError

LOG_LEVEL = os.environ.get("EIT_LOG_LEVEL", "INFO")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Subcutaneous-fat border estimation with EIT")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="Run config JSON file")
    common.add_argument("--out", default=None, help="Output directory")
    common.add_argument("--centers", default=None, help="'all' or a comma-separated list of center electrodes")
    common.add_argument("--snr-db", type=float, default=None, help="Gaussian noise level on U in dB")
    common.add_argument("--seed", type=int, default=None, help="Noise seed")
    common.add_argument("--alpha", type=float, default=None, help="Tikhonov regularisation parameter")
    common.add_argument("--raster", action="store_true", default=None, help="Also write a PGM raster")
    common.add_argument("--figures", action="store_true", default=None, help="Also write PNG figures")

    sub.add_parser("simulate", parents=[common], help="Simulate measurement frames")
    recon = sub.add_parser("reconstruct", parents=[common], help="Reconstruct and merge images")
    recon.add_argument("--frames", nargs="*", default=None, help="Frame CSVs (default: <out>/frame_n*.csv)")
    sub.add_parser("convergence", parents=[common], help="CEM to PEM convergence study")
    diag = sub.add_parser("diagnostics", parents=[common], help="Correlation and decay diagnostics")
    diag.add_argument("--system", required=True, help="System artifact system_n{n}.npz")
    return parser


def run(args: argparse.Namespace) -> dict:
    config = load_run_config(args.config)
    overrides = dict(
        out_dir=args.out,
        centers=parse_centers(args.centers),
        snr_db=args.snr_db,
        seed=args.seed,
        alpha=args.alpha,
        raster=args.raster,
        figures=args.figures,
    )
    if args.command == "convergence":
        return cmd_convergence(config.with_overrides(validate=False, **overrides))
    config = config.with_overrides(**overrides)
    if args.command == "simulate":
        return cmd_simulate(config)
    if args.command == "reconstruct":
        return cmd_reconstruct(config, args.frames)
    return cmd_diagnostics(config, args.system)


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(
        level=getattr(logging, LOG_LEVEL.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    args = build_parser().parse_args(argv)
    try:
        run(args)
    except EITError as exc:
        print(json.dumps(exc.to_dict()), file=sys.stderr)
        return exc.exit_code
    except Exception as exc:
        logging.getLogger(__name__).exception("Unexpected failure")
        print(json.dumps({"kind": "internal", "message": str(exc), "context": {}}), file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
