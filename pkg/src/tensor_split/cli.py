"""``tensor-split <command> --config cfg.json [flags]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import ConfigError
from .report import COMMANDS, EXIT_CONFIG, load_config, resolve_config, run


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tensor-split",
                                description="Orthogonal splittings of symmetric 2-tensors on discretized tori.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--grid", type=int, help="points per axis (overrides config N)")
    p.add_argument("--order", type=int, choices=(2, 4), help="stencil order")
    p.add_argument("--tol", type=float, help="relative tolerance of the elliptic solves")
    p.add_argument("--seed", type=int, help="seed for probes and random test fields")
    p.add_argument("--out", help="report path (default: stdout)")
    p.add_argument("--dump-fields", help="directory for field files of the computed parts")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        doc = load_config(args.config) if args.config else {}
        doc = {**doc, "command": args.command}
        over = {"N": args.grid, "order": args.order, "seed": args.seed, "out": args.out,
                "dump_fields": args.dump_fields}
        if args.tol is not None:
            over["solve"] = {"rel_tol": args.tol}
        cfg = resolve_config(doc, over)
    except ConfigError as exc:
        print(f"tensor-split: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    status, report = run(cfg)
    text = report.to_json()
    if cfg.get("out"):
        try:
            Path(cfg["out"]).write_text(text + "\n")
        except OSError as exc:
            print(f"tensor-split: cannot write report: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    else:
        print(text)
    if "error" in report.results:
        print(f"tensor-split: {report.results['error']}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
