"""Command-line entry point: ``qfedgd run|scenario|list-scenarios``."""
from __future__ import annotations

import argparse
import json
import os
import sys

from . import scenarios
from .scenarios import EXIT_CONFIG, ConfigError, RunResult

OUTPUT_ENV = "QFEDGD_OUTPUT_DIR"
DEFAULT_OUTPUT = "qfedgd-out"


def output_root(cli_value: str | None) -> str:
    return cli_value or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT


def write_artifacts(result: RunResult, out_dir: str) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name, text in sorted(result.artifacts.items()):
        path = os.path.join(out_dir, name)
        with open(path, "w", newline="") as fh:
            fh.write(text)
        written.append(path)
    return written


def _finish(result: RunResult, out_dir: str) -> int:
    for path in write_artifacts(result, out_dir):
        print(f"wrote {path}")
    if result.summary:
        print(result.summary)
    return result.status


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qfedgd", description="Quantum federated gradient descent simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a JSON config file")
    r.add_argument("config")
    r.add_argument("--seed", type=int, default=None, help="override the config seed")
    r.add_argument("--out", default=None, help=f"output directory (default ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")

    s = sub.add_parser("scenario", help="run a built-in scenario")
    s.add_argument("name")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default=None, help=f"output directory (default ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")

    sub.add_parser("list-scenarios", help="list built-in scenarios")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-scenarios":
        for name, (desc, _) in scenarios.SCENARIOS.items():
            print(f"{name:20s} {desc}")
        return 0
    try:
        if args.command == "scenario":
            result = scenarios.run_named(args.name, args.seed)
            return _finish(result, os.path.join(output_root(args.out), args.name))
        try:
            with open(args.config) as fh:
                config = json.load(fh)
        except FileNotFoundError:
            raise ConfigError("config", f"file not found: {args.config}") from None
        except json.JSONDecodeError as e:
            raise ConfigError("config", f"invalid JSON at line {e.lineno}: {e.msg}") from None
        base = os.path.dirname(os.path.abspath(args.config))
        result = scenarios.run_config(config, base, args.seed)
        name = config.get("name") or os.path.splitext(os.path.basename(args.config))[0]
        return _finish(result, os.path.join(output_root(args.out), name))
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
