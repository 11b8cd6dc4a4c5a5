"""Command-line front end for the experiment runner.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numerical
failure inside the pipeline.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .beamformer import DegenerateSteeringError
from .experiment import (
    REVERB_PRESETS,
    ConfigError,
    config_from_mapping,
    load_config_mapping,
    run_experiment,
)
from .rtf import ESTIMATOR_TAGS, UnreliableBinError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="binbeam",
        description=(
            "Binaural speech enhancement experiment runner: sweeps RTF "
            "estimators over SNRs and reverberation severities and reports "
            "noise-reduction and spatial-cue metrics."
        ),
    )
    parser.add_argument(
        "--config",
        metavar="PATH",
        help="TOML experiment description; the flags below override its fields",
    )
    parser.add_argument(
        "--estimator",
        action="append",
        choices=ESTIMATOR_TAGS,
        help="estimator to run (repeatable; default B CW SC SC_opt)",
    )
    parser.add_argument(
        "--snr",
        action="append",
        type=float,
        metavar="DB",
        help="input SNR at the right reference mic (repeatable)",
    )
    parser.add_argument(
        "--reverb",
        action="append",
        metavar="LABEL",
        help=f"reverberation preset (repeatable; one of {', '.join(sorted(REVERB_PRESETS))})",
    )
    parser.add_argument(
        "--seed",
        action="append",
        type=int,
        help="scene seed (repeatable)",
    )
    parser.add_argument(
        "--static",
        action="store_true",
        default=None,
        help="estimate filters once from long-term statistics instead of per frame",
    )
    parser.add_argument(
        "--uniform-weights",
        action="store_true",
        default=None,
        help="weight all frequency bands equally in the SNR-improvement metric",
    )
    parser.add_argument("--out", metavar="DIR", help="output directory")
    parser.add_argument(
        "--write-audio",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="write enhanced stereo WAV files per condition",
    )
    return parser


def _merged_config(args: argparse.Namespace):
    """Config file first, then flag overrides, then one validation pass."""
    raw: dict = {}
    if args.config is not None:
        raw = load_config_mapping(args.config)
    if args.estimator:
        raw["estimators"] = tuple(args.estimator)
    if args.snr:
        raw["snr_grid_db"] = tuple(args.snr)
    if args.reverb:
        raw["reverb_grid"] = tuple(args.reverb)
    if args.seed:
        raw["seeds"] = tuple(args.seed)
    if args.static is not None:
        raw["static_filters"] = args.static
    if args.uniform_weights is not None:
        raw["uniform_weights"] = args.uniform_weights
    if args.out is not None:
        raw["output_dir"] = args.out
    if args.write_audio is not None:
        raw["write_audio"] = args.write_audio
    return config_from_mapping(raw)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _merged_config(args)
        rows = run_experiment(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (
        DegenerateSteeringError,
        UnreliableBinError,
        np.linalg.LinAlgError,
        FloatingPointError,
    ) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"wrote {len(rows)} rows to {cfg.output_dir}/report.csv")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
