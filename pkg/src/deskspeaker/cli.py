"""Command-line front door: run pipeline stages against a config file."""

from __future__ import annotations

import argparse
import sys

from .config import KNOWN_SYSTEMS, default_config, load_config
from .errors import DeskSpeakerError
from .harness import STAGES, run_pipeline

_STAGE_HELP = {
    "synth": "generate the synthetic corpus",
    "features": "apply front-end processing and voice posteriors",
    "train-embed": "train the embedding network(s)",
    "train-ubm": "train the background mixture model",
    "train-tvm": "train the total-variability subspace",
    "extract": "extract vectors for every system variant",
    "backend": "fit preprocessor and scoring backend per variant",
    "score": "score all enroll/test trials",
    "report": "compute error metrics and write the report",
    "run-all": "run every stage in order",
}


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", metavar="PATH",
                   help="YAML config overlaying the built-in defaults")
    p.add_argument("--out", metavar="DIR",
                   help="output directory (default from config)")
    p.add_argument("--seed", type=int, metavar="N",
                   help="master random seed (default from config)")
    p.add_argument("--systems", metavar="LIST",
                   help=f"comma-separated subset of {','.join(KNOWN_SYSTEMS)}")
    p.add_argument("--soft-vad", choices=("on", "off", "both"),
                   help="soft VAD reweighting variants to run")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deskspeaker",
        description="Desk-scale speaker recognition pipeline on synthetic "
                    "speech-like data.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="STAGE")
    for name in (*STAGES, "run-all"):
        _add_common(sub.add_parser(name, help=_STAGE_HELP[name]))
    return parser


def _resolve_config(args):
    cfg = load_config(args.config) if args.config else default_config()
    if args.out is not None:
        cfg.out = args.out
    if args.seed is not None:
        cfg.seed = args.seed
    if args.systems is not None:
        cfg.systems = tuple(s.strip() for s in args.systems.split(",") if s.strip())
    if args.soft_vad is not None:
        cfg.soft_vad = args.soft_vad
    cfg.__post_init__()
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve_config(args)
        stages = None if args.command == "run-all" else [args.command]
        run_pipeline(cfg, stages=stages, echo=print)
    except (DeskSpeakerError, ValueError, OSError) as exc:
        print(f"deskspeaker: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
