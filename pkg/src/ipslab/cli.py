"""``ips-lab <experiment> --config <file> [--seed N] [--reps N] [--out DIR] [--workers N]``.

Exit codes: 0 every flag passed, 1 a statistical flag failed or data were
insufficient, 2 usage error, 3 runtime or I/O error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import List, Optional

from .experiments import EXPERIMENTS, UsageError, make_config, parse_kv, run_experiment

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ips-lab", description="Run one experiment and write CSV tables plus summary.json.")
    ap.add_argument("experiment", choices=sorted(EXPERIMENTS))
    ap.add_argument("--config", type=Path, help="flat key=value file; CLI flags override its keys")
    ap.add_argument("--seed", type=int, help="master seed")
    ap.add_argument("--reps", type=int, help="main replica count")
    ap.add_argument("--out", type=Path, help="output directory (default results/<experiment>)")
    ap.add_argument("--workers", type=int, help="worker processes (results do not depend on it)")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = {}
        if args.config is not None:
            try:
                raw = parse_kv(args.config.read_text(encoding="utf-8"), str(args.config))
            except OSError as e:
                raise UsageError("config", f"cannot read {args.config}: {e.strerror}") from None
        for item in args.set:
            raw.update(parse_kv(item, "--set"))
        cfg = make_config(args.experiment, raw, seed=args.seed, reps=args.reps, out=args.out, workers=args.workers)
    except UsageError as e:
        print(f"ips-lab: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        res = run_experiment(cfg)
    except OSError as e:
        print(f"ips-lab: I/O error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:  # simulation failures surface as exit code 3
        print(f"ips-lab: runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    for k in sorted(res.flags):
        v = res.flags[k]
        print(f"{k}: {'pass' if v is True else 'FAIL' if v is False else v}")
    print(f"wrote {cfg.output} ({res.wall_time:.1f} s)")
    return EXIT_PASS if res.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
