"""Train DQL under QoE weights 1 and 5000 and report the SE/QoE tradeoff.

    python scripts/qoe_weight_sweep.py --out runs/qoe_weight --seeds 0,1,2,3,4
"""

import argparse
import logging
from pathlib import Path

import numpy as np

from slicedrl.harness import load_config, sweep

HERE = Path(__file__).resolve().parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, default=HERE.parent / "configs" / "radio_weight_tradeoff.yaml")
    ap.add_argument("--out", type=Path, default=Path("runs/qoe_weight"))
    ap.add_argument("--seeds", default="0,1,2,3,4")
    ap.add_argument("--weights", default="1,5000")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    weights = [float(w) for w in args.weights.split(",")]
    seeds = [int(s) for s in args.seeds.split(",")]
    reports = sweep(load_config(args.config), "qoe_weight", weights, ["dql"], seeds, args.out)

    for w, rep in reports.items():
        print(f"weight {w:8g}: SE {rep.mean('dql', 'se'):.4f}  QoE {rep.mean('dql', 'qoe_aggregate'):.4f}")
    lo, hi = reports[weights[0]], reports[weights[-1]]
    for metric in ("se", "qoe_aggregate"):
        d = hi.values("dql", metric) - lo.values("dql", metric)
        se = np.std(d, ddof=1) / np.sqrt(d.size) if d.size > 1 else 0.0
        print(f"{metric}: paired change {d.mean():+.4f} +/- {se:.4f}")


if __name__ == "__main__":
    main()
