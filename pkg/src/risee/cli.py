"""Command-line entry point: ``sweep``, ``single`` and ``validate``."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .allocator import evaluate_allocation
from .channels import generate_scenario
from .experiment import (SCHEMES, ConfigError, ExperimentConfig, aggregate, emit, emit_summary,
                         load_config, run_scheme, run_sweep, trial_seed)
from .validation import run_all


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="JSON experiment config")
    p.add_argument("--preset", choices=("desk", "paper"), default="paper",
                   help="defaults the config is applied on top of")
    p.add_argument("--seed", type=int, help="base seed (overrides the config)")
    p.add_argument("--out", type=Path, help="output file")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--threads", type=int, default=1, help="worker processes")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="risee", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("sweep", parents=[common], help="run a Monte-Carlo sweep")
    single = sub.add_parser("single", parents=[common], help="run one trial and print the trace")
    single.add_argument("--scheme", choices=SCHEMES, default="a")
    single.add_argument("--trial", type=int, default=0)
    sub.add_parser("validate", parents=[common], help="run the invariant checks")
    return parser


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config, args.preset)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def cmd_sweep(args) -> int:
    cfg = _config(args)
    records = run_sweep(cfg, threads=max(1, args.threads))
    out = args.out or Path(f"sweep.{args.format}")
    emit(records, out, args.format, cfg)
    rows = aggregate(records)
    summary = out.with_name(f"{out.stem}_summary{out.suffix or '.' + args.format}")
    emit_summary(rows, summary, args.format, cfg)
    print(f"{'scheme':>6} {'mode':>15} {cfg.sweep:>12} {'n':>4} {'fail':>4} "
          f"{'SEE [bit/J]':>12} {'SSR [bit/s]':>12}")
    for r in rows:
        print(f"{r.scheme:>6} {r.ris_mode:>15} {r.sweep_value:>12g} {r.n:>4d} {r.n_failed:>4d} "
              f"{r.mean['see_true']:>12.4e} {r.mean['ssr_true']:>12.4e}")
    print(f"records: {out}\nsummary: {summary}")
    return 0


def cmd_single(args) -> int:
    cfg = _config(args)
    seed = trial_seed(cfg.seed, args.trial)
    params = cfg.params()
    channels, _ = generate_scenario(params, cfg.geometry, cfg.fading, seed, cfg.error_ratio)
    out = run_scheme(args.scheme, channels, params, cfg.solver,
                     (cfg.grid_phases, cfg.grid_moduli), seed)
    alloc, trace = out.alloc, out.trace
    rep = evaluate_allocation(alloc, channels, params)
    doc = {
        "scheme": args.scheme, "trial": args.trial, "seed": seed,
        "gamma_modulus": np.abs(alloc.gamma).tolist(),
        "gamma_phase": np.angle(alloc.gamma).tolist(),
        "p": alloc.p.tolist(),
        "report": dataclasses.asdict(rep),
        "trace": None if trace is None else {
            "objective": trace.objective, "see": trace.see, "ssr": trace.ssr,
            "power": trace.power, "min_slack": trace.min_slack, "feasible": trace.feasible,
            "gamma_iters": trace.gamma_iters, "power_iters": trace.power_iters,
            "converged": trace.converged, "flags": out.flags},
    }
    if args.format == "json":
        text = json.dumps(doc, indent=1)
    else:
        lines = [f"scheme {args.scheme}  trial {args.trial}  seed {seed}"]
        if trace is not None:
            lines.append(f"{'iter':>4} {'objective':>14} {'SEE [bit/J]':>14} {'SSR [bit/s]':>14} "
                         f"{'P_tot [W]':>12} {'I_gamma':>7} {'I_p':>4}")
            for i, row in enumerate(zip(trace.objective, trace.see, trace.ssr, trace.power,
                                        trace.gamma_iters, trace.power_iters)):
                lines.append(f"{i:>4d} {row[0]:>14.6e} {row[1]:>14.6e} {row[2]:>14.6e} "
                             f"{row[3]:>12.4e} {row[4]:>7d} {row[5]:>4d}")
            lines.append(f"converged: {trace.converged}")
        lines.append("p [W]: " + " ".join(f"{v:.4e}" for v in alloc.p))
        lines.append("|gamma|: " + " ".join(f"{v:.4f}" for v in np.abs(alloc.gamma)))
        lines.append("arg gamma: " + " ".join(f"{v:.4f}" for v in np.angle(alloc.gamma)))
        lines += [f"{k}: {v:.6e}" for k, v in dataclasses.asdict(rep).items()]
        text = "\n".join(lines)
    if args.out:
        args.out.write_text(text + "\n")
    print(text)
    return 0


def cmd_validate(args) -> int:
    seed = 0 if args.seed is None else args.seed
    checks = run_all(seed)
    for c in checks:
        print(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.detail}")
    if args.out:
        rows = [dataclasses.asdict(c) for c in checks]
        if args.format == "json":
            args.out.write_text(json.dumps(rows, indent=1) + "\n")
        else:
            with args.out.open("w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=["name", "passed", "detail"], lineterminator="\n")
                w.writeheader()
                w.writerows(rows)
    return 0 if all(c.passed for c in checks) else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return {"sweep": cmd_sweep, "single": cmd_single, "validate": cmd_validate}[args.command](args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
