"""Command-line entry point.

Exit codes: 0 success, 1 the run finished but an acceptance check failed,
2 configuration error (bad JSON, unknown keys, missing dataset), 3 runtime
failure inside a driver.
"""
import argparse
import json
import logging
import os
import sys

from pydantic import ValidationError

from .errors import ConfigError, MissingDataset, TocflowError
from .experiments.tasks import TASKS, run_experiment
from .report import emit_report, versions

SUBCOMMANDS = {
    "gaussian-verify": "gaussian",
    "fig1": "fig1",
    "proximal-check": "proximal_check",
    "trajectory": "trajectory",
    "darcy": "darcy",
    "spectrum": "spectrum",
    "fm-train": "fm_train",
    "gradcheck": "gradcheck",
    "gen-data": "gen_data",
}
SAMPLING = ("trajectory", "darcy", "spectrum")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("tocflow")


def build_parser():
    p = argparse.ArgumentParser(prog="tocflow", description="Guided flow sampling experiments.")
    sub = p.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")
    sub.required = True
    for name, task in SUBCOMMANDS.items():
        sp = sub.add_parser(name, help=f"run the {task} task")
        sp.add_argument("--config", metavar="PATH", help="JSON config or a previous manifest.json")
        sp.add_argument("--out", metavar="DIR", default=None, help=f"output directory (default out/{name})")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--quiet", action="store_true", help="only print errors")
        sp.add_argument("--workers", type=int, default=None, help="threads per batch (default TOCFLOW_THREADS or 1)")
        sp.add_argument("--wallclock", action="store_true",
                        help="record per-sample wallclock in report.csv (breaks byte-identical reruns)")
        sp.add_argument("--dump-states", action="store_true", help="write terminal states as .bin + .json")
    return p


def load_config(path, subcommand):
    """Parse a JSON config; a manifest written by an earlier run is accepted
    and its embedded config reused."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: malformed JSON: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    if "manifest_version" in data:
        if data.get("subcommand") != subcommand:
            raise ConfigError(f"{path}: manifest was written by {data.get('subcommand')!r}, not {subcommand!r}")
        opts = data.get("options", {})
        return data.get("config", {}), opts
    return data, {}


def apply_seed(task, cfg, seed):
    if seed is None:
        return cfg
    if task == "fm_train":
        return cfg.model_copy(update={"train": cfg.train.model_copy(update={"seed": seed})})
    if "seed" in type(cfg).model_fields:
        return cfg.model_copy(update={"seed": seed})
    log.warning("task %s has no seed; --seed ignored", task)
    return cfg


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    task = SUBCOMMANDS[args.subcommand]
    model, _ = TASKS[task]
    try:
        raw, opts = load_config(args.config, args.subcommand) if args.config else ({}, {})
        cfg = apply_seed(task, model.model_validate(raw), args.seed)
        record_wallclock = bool(args.wallclock or opts.get("record_wallclock", False))
        dump_states = bool(args.dump_states or opts.get("dump_states", False))
        if dump_states and task in SAMPLING:
            cfg = cfg.model_copy(update={"keep_states": True})
        out = args.out or os.path.join("out", args.subcommand)
        os.makedirs(out, exist_ok=True)
        if not os.access(out, os.W_OK):
            raise ConfigError(f"output directory {out} is not writable")
    except ValidationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    manifest = {
        "manifest_version": 1,
        "subcommand": args.subcommand,
        "config": cfg.model_dump(mode="json"),
        "options": {"record_wallclock": record_wallclock, "dump_states": dump_states},
        "versions": versions(),
    }
    try:
        result = run_experiment(task, cfg, workers=args.workers)
    except MissingDataset as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TocflowError, FloatingPointError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        emit_report(result, out, manifest, record_wallclock, dump_states)
    except OSError as exc:
        print(f"error writing {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_RUNTIME
    if not args.quiet:
        for name, ok in result.checks.items():
            print(f"{'PASS' if ok else 'FAIL'} {name}")
        print(f"results in {out}")
    return EXIT_OK if result.passed else EXIT_FAILED


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
