"""Print the per-round objective of the alternating loop for one desk instance.

Usage: python3 scripts/convergence_trace.py [--trial 0] [--p-tmax-dbm 30] [--statistical]
"""
from __future__ import annotations

import argparse

from risee.allocator import alternate
from risee.channels import dbm_to_watt, generate_scenario
from risee.experiment import config_from_dict, trial_seed
from risee.model import CsiMode, ObjectiveMode


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trial", type=int, default=0)
    ap.add_argument("--p-tmax-dbm", type=float, default=30.0)
    ap.add_argument("--statistical", action="store_true", help="design for the statistical eavesdropper CSI")
    ap.add_argument("--ssr", action="store_true", help="maximize the secrecy sum-rate instead")
    args = ap.parse_args(argv)
    cfg = config_from_dict({}, "desk")
    params = cfg.params(p_tmax=float(dbm_to_watt(args.p_tmax_dbm)))
    ch, _ = generate_scenario(params, cfg.geometry, cfg.fading, trial_seed(cfg.seed, args.trial),
                              cfg.error_ratio)
    csi = CsiMode.STATISTICAL if args.statistical else CsiMode.PERFECT
    obj = ObjectiveMode.SSR if args.ssr else ObjectiveMode.SEE
    _, trace = alternate(ch, params, csi, obj, cfg.solver)
    unit = "bit/s/Hz" if args.ssr else "bit/s/Hz/J"
    print(f"{'round':>5} {'objective [' + unit + ']':>28} {'min slack':>12}")
    for i, (v, s) in enumerate(zip(trace.objective, trace.min_slack)):
        print(f"{i:>5d} {v:>28.10g} {s:>12.3e}")
    print(f"converged: {trace.converged} after {trace.iterations} rounds")
    for f in trace.flags:
        print(f"flag: {f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
