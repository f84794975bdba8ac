"""Run every sweep in configs/ through the command line and collect the outputs.

Usage: python3 scripts/run_all_sweeps.py [--preset desk|paper] [--out results] [--threads 1]
"""
from __future__ import annotations

import argparse
import time
from pathlib import Path

from risee.cli import main as risee_main

CONFIGS = ("transmit_power", "active_vs_passive_n16", "active_vs_passive_n32",
           "csi_error", "quantization")


def main(argv=None) -> int:
    root = Path(__file__).resolve().parent.parent
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", choices=("desk", "paper"), default="desk")
    ap.add_argument("--out", type=Path, default=root / "results")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--only", nargs="*", choices=CONFIGS, help="subset of sweeps to run")
    args = ap.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)
    for name in args.only or CONFIGS:
        t0 = time.perf_counter()
        cli = ["sweep", "--config", str(root / "configs" / f"{name}.json"), "--preset", args.preset,
               "--out", str(args.out / f"{name}_{args.preset}.csv"), "--threads", str(args.threads)]
        if args.seed is not None:
            cli += ["--seed", str(args.seed)]
        code = risee_main(cli)
        print(f"{name}: exit {code}, {time.perf_counter() - t0:.0f} s\n")
        if code:
            return code
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
