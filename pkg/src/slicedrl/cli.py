"""Command line: ``slicedrl {train,eval,compare,sweep} --config FILE``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .agent import TrainingDivergence
from .harness import (PROFILES, RADIO_SCHEMES, SFC_SCHEMES, SWEEP_AXES, ComparisonReport,
                      compare_schemes, config_from_dict, load_config, run_experiment, sweep)
from .traffic import ConfigError


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="YAML experiment config")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", type=Path, default=Path("runs"), help="output directory")
    p.add_argument("--profile", choices=sorted(PROFILES), help="desk (default) or full scale")


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="slicedrl", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a DQL agent and evaluate it")
    _common(p)

    p = sub.add_parser("eval", help="evaluate the configured scheme or a saved checkpoint")
    _common(p)
    p.add_argument("--checkpoint", type=Path, help="checkpoint.json of a trained agent")

    p = sub.add_parser("compare", help="paired comparison of schemes over seeds")
    _common(p)
    p.add_argument("--schemes", help="comma-separated schemes (default: all for the scenario)")
    p.add_argument("--seeds", type=_int_list, default=[0, 1, 2, 3, 4])

    p = sub.add_parser("sweep", help="one comparison per QoE weight or antenna count")
    _common(p)
    p.add_argument("--axis", choices=SWEEP_AXES, required=True)
    p.add_argument("--values", type=_float_list, required=True)
    p.add_argument("--schemes", default="dql")
    p.add_argument("--seeds", type=_int_list, default=[0, 1, 2, 3, 4])
    return ap


def _load(args):
    if args.config is not None:
        return load_config(args.config, args.profile, args.seed)
    return config_from_dict({}, args.profile, args.seed)


def _schemes(args, scenario):
    if args.schemes:
        return [s.strip() for s in args.schemes.split(",") if s.strip()]
    return list(RADIO_SCHEMES if scenario == "radio" else SFC_SCHEMES)


def _print_report(report: ComparisonReport, title: str = ""):
    if title:
        print(title)
    for scheme, metric, mean, std, n in report.table():
        print(f"  {scheme:12s} {metric:22s} {mean:12.6g} +/- {std:.3g}  (n={n})")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
        if args.command == "train":
            if cfg.scheme != "dql":
                cfg = replace(cfg, scheme="dql")
            res = run_experiment(cfg, args.out)
            print(f"{cfg.scenario}/{res.scheme} seed {res.seed}: " +
                  ", ".join(f"{k}={v:.6g}" for k, v in res.metrics.items()))
        elif args.command == "eval":
            res = run_experiment(cfg, args.out, checkpoint=args.checkpoint)
            print(f"{cfg.scenario}/{res.scheme} seed {res.seed}: " +
                  ", ".join(f"{k}={v:.6g}" for k, v in res.metrics.items()))
        elif args.command == "compare":
            report = compare_schemes(cfg, _schemes(args, cfg.scenario), args.seeds, args.out)
            _print_report(report)
        else:
            if not args.values:
                raise ConfigError("sweep needs at least one value")
            reports = sweep(cfg, args.axis, args.values, _schemes(args, cfg.scenario), args.seeds, args.out)
            for v, report in reports.items():
                _print_report(report, f"{args.axis} = {v}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except TrainingDivergence as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
