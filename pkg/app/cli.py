"""
Command-line interface: synth, partition, run, eval and init-manifest.

Machine-readable results go to stdout as JSON; log records and error
messages go to stderr. Exit codes: 0 when every requested artifact was
written, 1 on a runtime failure, 2 on a usage error (argparse).
"""

import argparse
import json
import logging
import os
import sys

from app.config.config_manager import write_template
from app.config.defaults import SYNTH_DEFAULTS, SYNTH_PRESETS
from app.core.dataset import make_blob_spec, save_csv, synth_gaussian
from app.services import experiment_service
from app.services.report_service import get_current_version, to_jsonable

logger = logging.getLogger(__name__)


def _print(payload: dict):
    print(json.dumps(to_jsonable(payload), indent=2))


def _finish(result: dict) -> int:
    if not result.get("success"):
        print(f"error: {result.get('message', 'failed')}", file=sys.stderr)
        return 1
    _print({k: v for k, v in result.items() if k != "success"})
    return 0


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    try:
        spec = make_blob_spec(args.blobs, args.n, args.d, rng_seed=args.seed,
                              stddev=args.stddev, separation=args.separation)
        path = save_csv(synth_gaussian(spec), args.out)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    logger.info("Wrote %s", path)
    _print({"path": os.path.abspath(path), "n": args.n, "d": args.d, "k_star": args.blobs,
            "seed": args.seed})
    return 0


def cmd_partition(args) -> int:
    return _finish(experiment_service.write_partition(
        args.data, args.clients, args.out, seed=args.seed,
        has_header=not args.no_header, label_col=args.label_col,
        normalize=not args.no_normalize,
    ))


def cmd_run(args) -> int:
    def _progress(message: str, percent: int):
        logger.info("[%3d%%] %s", percent, message)

    result = experiment_service.run_manifest(args.manifest, output_dir=args.output_dir,
                                             jobs=args.jobs, progress_callback=_progress)
    return _finish(result)


def cmd_eval(args) -> int:
    return _finish(experiment_service.evaluate_labels(
        args.data, args.labels, has_header=not args.no_header,
        label_col=args.label_col, normalize=args.normalize,
    ))


def cmd_init_manifest(args) -> int:
    if os.path.exists(args.path) and not args.force:
        print(f"error: {args.path} already exists (use --force to overwrite)", file=sys.stderr)
        return 1
    try:
        path = write_template(args.path, preset=args.preset, clients=args.clients)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    _print({"path": os.path.abspath(path)})
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _label_col(value: str):
    return int(value) if value.lstrip("-").isdigit() else value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="afcl",
        description="Asynchronous federated clustering: simulate, run and score experiments.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {get_current_version()}")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a labelled Gaussian-blob CSV")
    p.add_argument("--blobs", type=int, required=True, help="number of components (k*)")
    p.add_argument("--n", type=int, default=1000, help="total rows")
    p.add_argument("--d", type=int, default=2, help="dimensions")
    p.add_argument("--seed", type=int, default=SYNTH_DEFAULTS["seed"])
    p.add_argument("--stddev", type=float, default=SYNTH_DEFAULTS["stddev"])
    p.add_argument("--separation", type=float, default=SYNTH_DEFAULTS["separation"],
                   help="minimum distance between component centers")
    p.add_argument("--out", default="synth.csv", help="output CSV path")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("partition", help="split a CSV into non-IID client files")
    p.add_argument("data", help="input CSV")
    p.add_argument("--clients", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="clients", help="output directory")
    p.add_argument("--no-header", action="store_true")
    p.add_argument("--label-col", type=_label_col, default=None)
    p.add_argument("--no-normalize", action="store_true", help="keep raw values")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("run", help="run the trials of a manifest")
    p.add_argument("manifest", help="TOML manifest")
    p.add_argument("--output-dir", default=None, help="override the manifest's output_dir")
    p.add_argument("--jobs", type=int, default=1, help="trials run concurrently")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="score a labelling with SC and CH")
    p.add_argument("--data", required=True)
    p.add_argument("--labels", required=True, help="CSV with a 'label' column (or labels in the last column)")
    p.add_argument("--no-header", action="store_true")
    p.add_argument("--label-col", type=_label_col, default=None, help="column of --data to ignore")
    p.add_argument("--normalize", action="store_true", help="min-max scale the data first")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("init-manifest", help="write a commented manifest template")
    p.add_argument("path")
    p.add_argument("--preset", choices=sorted(SYNTH_PRESETS), default="sd1")
    p.add_argument("--clients", type=int, default=3)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_init_manifest)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    elif args.quiet:
        logging.getLogger().setLevel(logging.WARNING)
    return args.func(args)
