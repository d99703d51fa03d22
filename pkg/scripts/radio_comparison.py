"""Compare DQL slicing with the four radio baselines on paired seeds.

    python scripts/radio_comparison.py --out runs/radio_comparison --seeds 0,1,2,3,4
"""

import argparse
import logging
from dataclasses import replace
from pathlib import Path

from slicedrl.harness import RADIO_SCHEMES, compare_schemes, load_config

HERE = Path(__file__).resolve().parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, default=HERE.parent / "configs" / "radio_desk.yaml")
    ap.add_argument("--out", type=Path, default=Path("runs/radio_comparison"))
    ap.add_argument("--seeds", default="0,1,2,3,4")
    ap.add_argument("--antennas", type=int, help="override the antenna count")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = load_config(args.config)
    if args.antennas is not None:
        cfg = replace(cfg, radio=replace(cfg.radio, antenna_count=args.antennas)).validate()
    seeds = [int(s) for s in args.seeds.split(",")]
    report = compare_schemes(cfg, list(RADIO_SCHEMES), seeds, args.out)

    print(f"{'scheme':8s} {'SE':>8s} {'VoLTE':>8s} {'video':>8s} {'URLLC':>8s} {'QoE':>8s}")
    for s in report.schemes:
        row = [report.mean(s, m) for m in ("se", "qoe_volte", "qoe_video", "qoe_urllc", "qoe_aggregate")]
        print(f"{s:8s} " + " ".join(f"{v:8.3f}" for v in row))
    print(f"CSV outputs under {args.out}")


if __name__ == "__main__":
    main()
