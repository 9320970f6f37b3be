"""Command-line entry point: ``pseudoboost {selftrain,supervised,pipeline,verify}``.

Exit codes: 0 when every requested target or check passes, 1 when some
fail, 2 for usage or configuration errors, 3 when a pipeline trial aborts
at the hand-off gate.
"""
from __future__ import annotations

import argparse
import json
import logging
from pathlib import Path
import sys
import time

from pseudoboost.config import ExperimentConfig, load_config, resolve_seed
from pseudoboost.exceptions import ConfigError, PreconditionError
from pseudoboost.harness import dumps, execute, write_atomic
from pseudoboost.verify import SELECTORS, run_verification

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_ABORT = 0, 1, 2, 3
REPORT_NAME = "report.json"

log = logging.getLogger("pseudoboost")


def _u64(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pseudoboost", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--seed", type=_u64, default=None,
                        help="master seed (beats PSEUDOBOOST_SEED and the config file)")
    common.add_argument("--jobs", type=_positive, default=1, help="worker processes")
    common.add_argument("--timing", action="store_true",
                        help="also write timing.json with wall-clock seconds")

    for name, text in (("selftrain", "self-training from an oracle-angle or file start"),
                       ("supervised", "logistic SGD pseudolabeler with validation selection"),
                       ("pipeline", "supervised pseudolabeler followed by self-training")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--config", type=Path, default=None,
                       help="JSON config file (defaults apply when omitted)")
        p.add_argument("--stride", type=_positive, default=1, help="write every N-th trace row")
        p.add_argument("--schedule", choices=("practical", "theorem"), default=None,
                       help="override the schedule in the config")

    p = sub.add_parser("verify", parents=[common], help="run the numerical check suite")
    p.add_argument("--which", choices=SELECTORS, default="all", help="check group")
    return parser


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config is not None else ExperimentConfig()
    if args.schedule is not None:
        changes = {"selftrain.schedule": args.schedule}
        if args.command in ("supervised", "pipeline"):
            changes["supervised.schedule"] = "theorem2" if args.schedule == "theorem" else "practical"
        cfg = cfg.replace(**changes)
    return resolve_seed(cfg, args.seed)


def _verify_seed(args) -> int:
    return resolve_seed(ExperimentConfig(), args.seed).seed


def _report_line(summary: dict) -> str:
    return (f"{summary['command']}: {summary['n_passed']}/{summary['n_trials']} trials passed "
            f"(need {summary['required_passes']}) -> {'PASS' if summary['passed'] else 'FAIL'}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    start = time.perf_counter()
    try:
        if args.command == "verify":
            seed = _verify_seed(args)
            log.info("verify --which %s --seed %d", args.which, seed)
            doc = run_verification(args.which, seed, args.jobs)
            write_atomic(args.out / REPORT_NAME, dumps(doc))
            for r in doc["reports"]:
                state = "PASS" if r["passed"] else ("VACUOUS" if r["vacuous"] else "FAIL")
                if r["passed"] and r["vacuous"]:
                    state = "PASS (vacuous)"
                print(f"{state:15s} {r['check']}  estimate={r['estimate']:.6g} bound={r['bound']:.6g}")
            print(f"verify {args.which}: {doc['n_reports']} checks, {doc['n_failed']} failed, "
                  f"{doc['n_vacuous']} vacuous")
            code = EXIT_OK if doc["passed"] else EXIT_FAIL
        else:
            cfg = _config(args)
            log.info("%s: seed %d, %d trials", args.command, cfg.seed, cfg.trials)
            summary = execute(args.command, cfg, args.out, args.jobs, args.stride)
            print(_report_line(summary))
            for t in summary["trials"]:
                if t.get("aborted"):
                    print(f"aborted: {t['message']}", file=sys.stderr)
            if summary.get("n_aborted"):
                code = EXIT_ABORT
            else:
                code = EXIT_OK if summary["passed"] else EXIT_FAIL
    except (ConfigError, PreconditionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.timing:
        write_atomic(args.out / "timing.json",
                     json.dumps({"wall_clock_s": time.perf_counter() - start}) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
