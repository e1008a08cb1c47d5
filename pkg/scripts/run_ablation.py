"""Paired-seed ablation over the silence/noise weight and the augmentations.

    python3 scripts/run_ablation.py --seeds 5 --out runs/ablation.json

Each seed generates one standard dataset; every arm trains on it from the
same initialization, so differences between rows are paired.
"""

import argparse
import json
import logging
import sys
import time

import numpy as np

from avsan import fileio
from avsan.cli import SUMMARY_KEYS, ablation, summarize
from avsan.trainer import TrainConfig

ARMS = {
    "full": {},
    "no_sn": {"lambda_sn": 0.0},
    "half_sn": {"lambda_sn": 0.5},
    "no_geo": {"geo_enabled": False},
    "no_sam": {"sam_enabled": False},
    "no_mask": {"mask_enabled": False},
}


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--arms", default=",".join(ARMS))
    p.add_argument("--out")
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    data_kwargs = {"n_classes": 3, "n_train": 200, "n_eval": 64, "n_calib": 64}
    rows, raw = [], {}
    for name in args.arms.split(","):
        base = TrainConfig(epochs=args.epochs)
        for k, v in ARMS[name].items():
            setattr(base, k, v)
        t0 = time.perf_counter()
        runs = ablation([], args.seeds, base, data_kwargs)
        summary = summarize(runs, [])[0]
        logging.info("%-8s %.1fs", name, time.perf_counter() - t0)
        rows.append((name, summary))
        raw[name] = runs

    header = ["arm"] + [k for k, _ in SUMMARY_KEYS]
    print("| " + " | ".join(header) + " |")
    print("|" + "---|" * len(header))
    for name, s in rows:
        print("| " + " | ".join([name] + [f"{s[k]['mean']:.2f} ± {s[k]['std']:.2f}" for k, _ in SUMMARY_KEYS]) + " |")
    if args.out:
        fileio.dump_json({"arms": ARMS, "seeds": args.seeds, "epochs": args.epochs,
                          "summary": dict(rows), "runs": raw}, args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
