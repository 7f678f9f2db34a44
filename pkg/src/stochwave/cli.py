"""Command-line interface: one subcommand per experiment plus config tools.

Exit codes: 0 success, 2 invalid config, 3 numerical blow-up in more than
half the replicas.
"""

from __future__ import annotations

import argparse
import filecmp
import json
import sys
import tempfile
from pathlib import Path

from .harness import EXPERIMENTS, ConfigError, load_config, run

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stochwave",
        description="Simulation experiments for the 3D stochastic wave equation",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--output-dir", default=None, help="override the config output_dir")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
    v = sub.add_parser("validate-config", help="validate a config file and exit")
    v.add_argument("config", help="JSON config file")
    r = sub.add_parser("replay", help="re-run a finished run directory and compare CSVs")
    r.add_argument("run_dir", help="directory containing config.json and results.csv")
    return parser


def _run_experiment(name: str, args) -> int:
    raw = json.loads(Path(args.config).read_text())
    if raw.get("experiment") != name:
        print(f"config declares experiment {raw.get('experiment')!r}, "
              f"but the {name!r} subcommand was invoked", file=sys.stderr)
        return 2
    if args.output_dir is not None:
        raw["output_dir"] = args.output_dir
    if args.seed is not None:
        raw["seed"] = args.seed
    cfg = load_config(raw)
    record = run(cfg)
    print(f"{name}: {len(record.rows)} rows, {record.excluded} excluded, "
          f"{record.wall_time:.1f}s")
    for key in sorted(record.aggregates):
        print(f"  {key} = {record.aggregates[key]}")
    if record.excluded > cfg.replicas / 2:
        print("more than half the replicas blew up", file=sys.stderr)
        return 3
    return 0


def _validate(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    print(f"config ok: experiment={cfg.experiment} replicas={cfg.replicas} seed={cfg.seed}")
    return 0


def _replay(args) -> int:
    run_dir = Path(args.run_dir)
    cfg_file = run_dir / "config.json"
    if not cfg_file.exists():
        print(f"{run_dir} has no config.json", file=sys.stderr)
        return 2
    raw = json.loads(cfg_file.read_text())
    with tempfile.TemporaryDirectory() as tmp:
        raw["output_dir"] = tmp
        cfg = load_config(raw)
        run(cfg)
        same = filecmp.cmp(run_dir / "results.csv", Path(tmp) / "results.csv", shallow=False)
    if same:
        print("replay matches: results.csv is byte-identical")
        return 0
    print("replay MISMATCH: results.csv differs from the stored run", file=sys.stderr)
    return 1


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "validate-config":
            return _validate(args)
        if args.command == "replay":
            return _replay(args)
        return _run_experiment(args.command, args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
