"""Command line entry point: ``run``, ``sweep`` and ``verify``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .dynamics import SimulationError
from .runner import run_simulation, sweep_b
from .verify import run_verify


def _parse_b_list(text: str) -> list[float]:
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma separated list of numbers: {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty b list")
    return values


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="critnls", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="evolve one configuration and write its verdict")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--out", type=Path, help="output directory (default: output.dir)")
    run.add_argument("--checkpoint", type=Path, help="checkpoint directory; resumes when it holds a cursor")
    run.add_argument("--plots", action="store_true", help="also write SVG figures")

    sweep = sub.add_parser("sweep", help="run a list of b values and tabulate the thresholds")
    sweep.add_argument("--config", required=True, type=Path)
    sweep.add_argument("--b", required=True, type=_parse_b_list, help="comma separated, sorted")
    sweep.add_argument("--out", type=Path)

    ver = sub.add_parser("verify", help="oracle and invariant suites, no PDE run")
    ver.add_argument("--config", required=True, type=Path)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.command == "run":
            verdict = run_simulation(cfg, args.out, checkpoint=args.checkpoint, plots=args.plots or cfg.plots)
            for name in verdict["failed"]:
                print(f"FAILED {name}", file=sys.stderr)
            print(json.dumps({"pass": verdict["pass"], "failed": verdict["failed"]}))
            return 0 if verdict["pass"] else 1
        if args.command == "sweep":
            table = sweep_b(cfg, args.b, args.out or Path(cfg.out_dir))
            for row in table["rows"]:
                print(
                    f"b={row['b']:<8g} psi_max={row['psi_max']!s:<22} psi<=4K={row['psi_pass']!s:<5} "
                    f"f0_sup={row['f0_sup']!s:<22} f0<=1/2={row['f0_pass']}"
                )
            print(f"b0_hat={table['b0_hat']} b1_hat={table['b1_hat']} ({table['status']})")
            for flag in table["flags"]:
                print(f"FLAG {flag}", file=sys.stderr)
            return 0 if table["b1_hat"] is not None and not table["flags"] else 1
        results = run_verify(cfg)
        for name, ok in results.items():
            print(f"{'ok  ' if ok else 'FAIL'} {name}")
        return 0 if all(results.values()) else 1
    except (ConfigError, SimulationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
