"""Command line entry points.

Subcommands mirror the pipeline stages plus ``pipeline`` to run a
configured prefix of them. Flags override config-file values. Exit codes:
0 success, 2 config error, 3 stage failure.
"""

import argparse
import sys

from .config import STAGE_ORDER, load_config, print_config
from .errors import ConfigError, RoadgenError
from .pipeline import STAGE_FUNCS, log_event, run_pipeline

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3


def _add_common(p):
    p.add_argument("--config", help="pipeline config JSON file")
    p.add_argument("--seed", type=int, help="override global seed")
    p.add_argument("--workdir", help="override paths.workdir")
    p.add_argument("--jobs", type=int, help="worker cap for within-stage parallelism")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="roadgen",
        description="Road-scenario synthesis: ingest, train, sample, lift to 3D, "
                    "score, measure, and export OpenDRIVE.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    for stage in STAGE_ORDER:
        p = sub.add_parser(stage, help=f"run the {stage} stage")
        _add_common(p)
        if stage == "ingest":
            p.add_argument("--geojson", help="offline GeoJSON input")
            p.add_argument("--dataset", help="output dataset path")
            p.add_argument("--offline", action="store_true",
                           help="forbid network use for map data")
        if stage == "train":
            p.add_argument("--max-steps", type=int)
            p.add_argument("--batch-size", type=int)
            p.add_argument("--omega", type=float)
            p.add_argument("--learning-rate", type=float)
        if stage == "sample":
            p.add_argument("--stride", type=int)
            p.add_argument("--count", type=int, help="scenarios per type")
            p.add_argument("--unconditional", action="store_true")
        if stage == "evaluate":
            p.add_argument("--s-min", type=float)
            p.add_argument("--lambda", dest="lam", type=float)
        if stage == "metrics":
            p.add_argument("--plots", action="store_true")

    p = sub.add_parser("pipeline", help="run the configured stage prefix")
    _add_common(p)
    p.add_argument("--stages", help="comma-separated stage prefix override")
    return ap


def _overrides_from_args(args):
    ov = {}
    if args.seed is not None:
        ov["seed"] = args.seed
    if args.jobs is not None:
        ov["jobs"] = args.jobs
    if args.workdir:
        ov.setdefault("paths", {})["workdir"] = args.workdir
    if getattr(args, "geojson", None):
        ov.setdefault("ingest", {})["geojson"] = args.geojson
    if getattr(args, "dataset", None):
        ov.setdefault("paths", {})["dataset"] = args.dataset
    if getattr(args, "offline", False):
        ov.setdefault("ingest", {}).setdefault("overpass", {})["offline"] = True
    if getattr(args, "max_steps", None) is not None:
        ov.setdefault("training", {})["max_steps"] = args.max_steps
    if getattr(args, "batch_size", None) is not None:
        ov.setdefault("training", {})["batch_size"] = args.batch_size
    if getattr(args, "omega", None) is not None:
        ov.setdefault("training", {})["omega"] = args.omega
    if getattr(args, "learning_rate", None) is not None:
        ov.setdefault("training", {})["learning_rate"] = args.learning_rate
    if getattr(args, "stride", None) is not None:
        ov.setdefault("sampler", {})["stride"] = args.stride
    if getattr(args, "count", None) is not None:
        counts = {t: args.count for t in ("intersection", "pudo", "roundabout", "flyover")}
        ov.setdefault("sampler", {})["count_per_type"] = counts
    if getattr(args, "unconditional", False):
        ov.setdefault("sampler", {})["unconditional"] = True
    if getattr(args, "s_min", None) is not None:
        ov.setdefault("evaluate", {})["s_min"] = args.s_min
    if getattr(args, "lam", None) is not None:
        ov.setdefault("evaluate", {})["lambda"] = args.lam
    if getattr(args, "plots", False):
        ov.setdefault("metrics", {})["plots"] = True
    if getattr(args, "stages", None):
        ov["stages"] = [s.strip() for s in args.stages.split(",") if s.strip()]
    return ov


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, _overrides_from_args(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print("effective config:", file=sys.stderr)
    print(print_config(cfg), file=sys.stderr)

    stages = cfg["stages"] if args.command == "pipeline" else [args.command]
    if args.command != "pipeline" and args.command not in STAGE_FUNCS:
        print(f"config error: unknown stage {args.command}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        run_pipeline(cfg, stages=stages)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RoadgenError as exc:
        stage = stages[0] if len(stages) == 1 else "pipeline"
        log_event(stage, "failed", error=str(exc), kind=type(exc).__name__)
        print(f"stage failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
