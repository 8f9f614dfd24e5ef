"""Command-line entry point.

Subcommands: instance, se, sweep, free-energy, selftest.  All but selftest
take a YAML experiment config (--config) and write one CSV (--out overrides
the config's output path).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .experiments import (cmd_free_energy, cmd_instance, cmd_se, cmd_selftest,
                          cmd_sweep, load_config, write_csv)
from .model import ConfigurationError

_COMMANDS = {
    "instance": cmd_instance,
    "se": cmd_se,
    "sweep": cmd_sweep,
    "free-energy": cmd_free_energy,
}


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mlamp",
        description="Multi-layer AMP experiments: instances, state evolution, "
                    "free energy and phase-diagram sweeps.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--out", help="output CSV path (overrides config)")
        p.add_argument("--seed", type=int, help="replace the config's seeds")
        p.add_argument("--threads", type=int, default=1,
                       help="worker processes for sweeps")
        p.add_argument("--no-timestamp", action="store_true",
                       help="omit the timestamp header line")
    p = sub.add_parser("selftest")
    p.add_argument("--draws", type=int, default=50,
                   help="random parameter draws per component")
    p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)

    if args.command == "selftest":
        ok, lines = cmd_selftest(n_draws=args.draws, seed=args.seed)
        print("\n".join(lines))
        print("selftest:", "PASS" if ok else "FAIL")
        return 0 if ok else 1

    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seeds=(args.seed,))
        cfg = replace(cfg, threads=args.threads,
                      timestamp=not args.no_timestamp)
        out = args.out or cfg.output
        if not out:
            raise ConfigurationError(
                "no output path: set 'output' in the config or pass --out")
        columns, rows, meta = _COMMANDS[args.command](cfg)
    except (ConfigurationError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    write_csv(out, columns, rows, meta=meta, timestamp=cfg.timestamp)
    print(f"wrote {len(rows)} rows to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
