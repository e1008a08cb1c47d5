"""Standard synthetic benchmark through the CLI, one row per model.

    python3 scripts/run_benchmark.py --out runs/bench --seed 0

Generates the dataset, trains the full model and the no-silence/noise
baseline, evaluates both, runs retrieval in both directions and writes the
comparison table and boxplot CSV under --out.
"""

import argparse
import json
import sys
from pathlib import Path

from avsan.cli import main as avsan

MODELS = {"full": [], "no_sn": ["--lambda-sn", "0"]}


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="runs/bench")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--timestamp", default="benchmark")
    args = p.parse_args(argv)
    out = Path(args.out)
    data = out / "data"
    manifest = str(data / "manifest.jsonl")

    def run(*cmd):
        code = avsan([str(c) for c in cmd])
        if code:
            raise SystemExit(code)

    run("gen", "--seed", args.seed, "--out", data)
    reports = []
    for name, flags in MODELS.items():
        m = out / name
        run("train", "--data", data, "--seed", args.seed, "--epochs", args.epochs, "--out", m, *flags)
        run("embed", "--ckpt", m / "ckpt.avst", "--manifest", manifest, "--out", m / "emb")
        run("eval", "--maps", m / "emb", "--manifest", manifest, "--timestamp", args.timestamp,
            "--out", out / f"{name}.json")
        for d in ("i2a", "a2i"):
            run("retrieve", "--embeddings", m / "emb", "--direction", d, "--out", m / f"retrieval_{d}.json")
        reports.append(out / f"{name}.json")
    run("report", "--inputs", *reports, "--format", "md", "--out", out / "table.md", "--boxplot", out / "boxplot.csv")
    print((out / "table.md").read_text())
    for name in MODELS:
        r = json.loads((out / name / "retrieval_i2a.json").read_text())["scores"]
        print(name, "i2a", " ".join(f"{k}={v:.1f}" for k, v in sorted(r.items())))
    return 0


if __name__ == "__main__":
    sys.exit(main())
