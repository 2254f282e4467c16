"""Command line entry point.

Exit status is 0 on success; on failure a JSON object with ``error`` and
``message`` (and ``errors`` for validation problems) goes to stderr and
the status is 2 for bad input, 1 otherwise.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .. import errors
from . import runner
from .config import load_config

BAD_INPUT = 2
INPUT_ERRORS = (errors.ValidationError, errors.ParseError, errors.BadParameter,
                errors.TopologyError, errors.UnknownKey, errors.EmptyValues,
                errors.BadConfig, errors.LayoutMismatch)


def _common(p):
    p.add_argument("config", help="YAML experiment file")
    p.add_argument("--seed", type=int, action="append",
                   help="evaluation seed (repeatable); overrides run.seeds")
    p.add_argument("--out", help="output directory; overrides run.out")
    p.add_argument("--workers", type=int, help="parallel worker processes")


def build_parser():
    ap = argparse.ArgumentParser(prog="bacnsim", description="Buffer-aided cooperative network simulator")
    sub = ap.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("simulate", help="train if needed, then evaluate every seed"))
    _common(sub.add_parser("train", help="train the configured learner and save policy files"))
    p = sub.add_parser("evaluate", help="evaluate a saved policy file")
    _common(p)
    p.add_argument("--policy", required=True, help="policy file written by train")
    p = sub.add_parser("sweep", help="repeat the experiment over values of one key")
    _common(p)
    p.add_argument("--param", required=True, help="sweepable key, e.g. environment.deadline")
    p.add_argument("--values", required=True, help="comma separated values, 'inf' allowed")
    p.add_argument("--no-plot", action="store_true", help="skip the PNG figure")
    _common(sub.add_parser("oracle", help="compare policies with the quantized-MDP optimum"))
    return ap


def _load(args):
    cfg = load_config(args.config)
    run = cfg.run.model_copy(update={
        k: v for k, v in (("seeds", args.seed), ("out", args.out), ("workers", args.workers))
        if v is not None})
    return cfg.model_copy(update={"run": run})


def _summary(rows):
    for r in rows:
        swept = f" {r['param']}={r['value']}" if r["param"] else ""
        print(f"{r['policy']:>9} seed={r['seed']}{swept} "
              f"throughput={r['throughput']:.4f}+-{r['throughput_se']:.4f} "
              f"mean_delay={r['mean_delay']:.2f} expiry={r['expiry_rate']:.4f}")


def run(argv=None):
    args = build_parser().parse_args(argv)
    cfg = _load(args)
    out = Path(cfg.run.out)
    if args.command == "simulate":
        rows = runner.run_experiment(cfg, out)
        _summary(rows)
    elif args.command == "train":
        if cfg.policy.name not in runner.LEARNERS:
            raise errors.BadConfig(f"policy {cfg.policy.name!r} is not trainable")
        rows = runner.run_experiment(cfg, out)
        _summary(rows)
        print(f"policies and training reports written to {out}")
    elif args.command == "evaluate":
        rows = runner.evaluate_policy_file(cfg, args.policy, out)
        _summary(rows)
    elif args.command == "sweep":
        values = runner.parse_values(args.values)
        rows = runner.sweep(cfg, args.param, values, out, plot=not args.no_plot)
        _summary(rows)
    elif args.command == "oracle":
        print(json.dumps(runner.oracle(cfg, out), indent=1, sort_keys=True))
    return 0


def main(argv=None):
    try:
        return run(argv)
    except errors.BacnError as exc:
        status = BAD_INPUT if isinstance(exc, INPUT_ERRORS) else 1
        print(json.dumps(exc.to_dict()), file=sys.stderr)
        return status


if __name__ == "__main__":
    sys.exit(main())
