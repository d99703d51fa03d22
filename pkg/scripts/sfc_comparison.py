"""Compare the DQL flow scheduler with the no-priority baseline on paired seeds.

    python scripts/sfc_comparison.py --out runs/sfc_comparison --seeds 0,1,2,3,4
"""

import argparse
import logging
from pathlib import Path

from slicedrl.harness import compare_schemes, load_config

HERE = Path(__file__).resolve().parent
METRICS = ("weighted_sojourn_s", "weighted_sojourn_A_s", "weighted_sojourn_B_s",
           "weighted_sojourn_C_s", "mean_sojourn_s", "cpus")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, default=HERE.parent / "configs" / "sfc_desk.yaml")
    ap.add_argument("--out", type=Path, default=Path("runs/sfc_comparison"))
    ap.add_argument("--seeds", default="0,1,2,3,4")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    seeds = [int(s) for s in args.seeds.split(",")]
    report = compare_schemes(load_config(args.config), ["dql", "no_priority"], seeds, args.out)
    for m in METRICS:
        d, se = report.paired_difference("dql", "no_priority", m)
        base = report.mean("no_priority", m)
        print(f"{m:22s} dql {report.mean('dql', m):.5f}  no_priority {base:.5f}  "
              f"change {d / base:+.1%} (paired SE {se:.5f})")


if __name__ == "__main__":
    main()
