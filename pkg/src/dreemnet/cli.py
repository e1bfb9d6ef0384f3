"""Command line entry point: ``dreemnet {train,eval,sweep,baselines}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .harness import (ExperimentSpec, evaluate_checkpoint, merge, preset, run_experiment,
                      run_sweep)


def _load_spec(args, **extra) -> ExperimentSpec:
    doc = preset(args.preset)
    if args.config:
        doc = merge(doc, json.loads(Path(args.config).read_text()))
    for key, value in extra.items():
        if value is not None:
            doc[key] = value
    if args.seed is not None:
        doc["seed"] = args.seed
        doc["scenario"]["seed"] = args.seed
    if args.out is not None:
        doc["out_dir"] = args.out
    return ExperimentSpec.from_dict(doc)


def _common(p, out_default):
    p.add_argument("--config", help="experiment JSON (merged over the preset)")
    p.add_argument("--preset", choices=["desk", "paper"], default="desk")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default=None, help=f"output directory (default {out_default})")


def _values(text):
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dreemnet", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("train", help="train agents and evaluate them with any baselines")
    _common(p, "runs/train")
    p.add_argument("--episodes", type=int)
    p.add_argument("--methods", help="comma-separated subset of methods")

    p = sub.add_parser("eval", help="evaluate a saved agent checkpoint")
    p.add_argument("--checkpoint", required=True)
    _common(p, "<checkpoint>/eval")
    p.add_argument("--method", default="dreem")

    p = sub.add_parser("sweep", help="repeat an experiment along one axis")
    _common(p, "runs/sweep")
    p.add_argument("--axis", required=True, choices=["r_min", "snr", "m"])
    p.add_argument("--values", required=True, type=_values)
    p.add_argument("--episodes", type=int)
    p.add_argument("--methods")

    p = sub.add_parser("baselines", help="evaluate the classical on/off strategies")
    _common(p, "runs/baselines")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    methods = getattr(args, "methods", None)
    methods = methods.split(",") if methods else None

    if args.cmd == "train":
        if args.out is None:
            args.out = "runs/train"
        spec = _load_spec(args, episodes=args.episodes, methods=methods)
        res = run_experiment(spec)
    elif args.cmd == "eval":
        if args.out is None:
            args.out = str(Path(args.checkpoint) / "eval")
        spec = _load_spec(args)
        res = evaluate_checkpoint(args.checkpoint, spec, args.method)
    elif args.cmd == "sweep":
        if args.out is None:
            args.out = "runs/sweep"
        axis = {"r_min": "r_min", "snr": "snr_db", "m": "M"}[args.axis]
        values = [int(v) for v in args.values] if axis == "M" else args.values
        spec = _load_spec(args, episodes=args.episodes, methods=methods,
                          sweep={"axis": axis, "values": values})
        table = run_sweep(spec)
        json.dump(table, sys.stdout, indent=2)
        print()
        return 0
    else:
        if args.out is None:
            args.out = "runs/baselines"
        spec = _load_spec(args, methods=["full", "sequential", "milp_inst", "milp_trans"])
        res = run_experiment(spec)

    json.dump({"out_dir": str(res.out_dir), "methods": res.summary, "failed": res.failed},
              sys.stdout, indent=2)
    print()
    return 1 if res.failed else 0


if __name__ == "__main__":
    sys.exit(main())
