"""Command-line entry point.

Subcommands ``split``, ``train-base``, ``errors``, ``fit`` and ``sweep`` run
one pipeline stage each against a config file; ``run`` runs them all.
``convert-uci-wifi`` turns the raw UCI localisation file into a CSV.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .data import convert_uci_wifi
from .errors import AbstainGPError
from .pipeline import STAGES, load_config, parse_threshold, run_pipeline, run_stage

log = logging.getLogger("abstain_gp")


def _floats(text):
    try:
        return [parse_threshold(t, "grid") for t in text.split(",") if t.strip()]
    except AbstainGPError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _add_run_options(p):
    p.add_argument("config", help="run config (.json or .toml)")
    p.add_argument("--seed", type=int)
    p.add_argument("--dataset")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--features", type=lambda s: [t.strip() for t in s.split(",")],
                   help="comma-separated feature subset")
    p.add_argument("--base-region", dest="base_region", action="append",
                   metavar="PRED", help='e.g. "C1>-50"; repeat to intersect')
    p.add_argument("--meta-region", dest="meta_region", action="append", metavar="PRED")
    p.add_argument("--test-region", dest="test_region", action="append", metavar="PRED")
    p.add_argument("--base-model", dest="base_model", choices=("learn", "rules-file"))
    p.add_argument("--rules-file", dest="rules_file")
    p.add_argument("--error-model", dest="error_model", choices=("gp", "logistic"))
    p.add_argument("--variance", type=float)
    p.add_argument("--length-scale", dest="length_scale", type=float)
    p.add_argument("--meta-train-size", dest="meta_train_size", type=int)
    p.add_argument("--mean-threshold", dest="mean_threshold", type=float)
    p.add_argument("--var-threshold", dest="var_threshold")
    p.add_argument("--mean-grid", dest="mean_grid", type=_floats,
                   help="comma-separated thresholds")
    p.add_argument("--var-grid", dest="var_grid", type=_floats,
                   help="comma-separated thresholds; 'max' disables")
    p.add_argument("--no-flip", dest="flip", action="store_const", const=False)
    p.add_argument("--standardize", dest="standardize", action="store_const", const=True)


_OVERRIDES = ("seed", "dataset", "output_dir", "features", "base_region",
              "meta_region", "test_region", "base_model", "rules_file",
              "error_model", "variance", "length_scale", "meta_train_size",
              "mean_threshold", "var_threshold", "mean_grid", "var_grid",
              "flip", "standardize")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="abstain-gp",
        description="GP error model and abstaining classifier for black-box "
                    "binary classifiers")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*STAGES, "run"):
        _add_run_options(sub.add_parser(name, help=f"run the {name} stage"
                                        if name != "run" else "run every stage"))
    conv = sub.add_parser("convert-uci-wifi",
                          help="convert wifi_localization.txt to CSV")
    conv.add_argument("src")
    conv.add_argument("dst")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "convert-uci-wifi":
            convert_uci_wifi(args.src, args.dst)
            return 0
        overrides = {k: getattr(args, k) for k in _OVERRIDES}
        cfg = load_config(args.config, overrides)
        if args.command == "run":
            run_pipeline(cfg)
        else:
            run_stage(cfg, args.command)
    except AbstainGPError as exc:
        print(f"abstain-gp: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
