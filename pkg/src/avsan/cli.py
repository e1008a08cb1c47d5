"""Command-line interface.

Exit codes: 0 success, 1 usage, 2 I/O, 3 validation, 4 numeric. Failures
print a one-line JSON object on stderr.
"""

import argparse
import datetime
import itertools
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, fileio
from .errors import AvsanError, ConfigError, ValidationError
from .metrics import IOU_GRID, PIA_GRID, EvalRecord, GroundTruthRegion, evaluate, f_auc, f_loc
from .core import PooledPair, max_pool
from .pipeline import calibrate_and_evaluate, embed_dataset
from .retrieval import EmbeddingItem, EmbeddingSet, retrieval_table
from .synthdata import DataConfig, gen_dataset, load_config, load_dataset, write_dataset
from .thresholding import NEGATIVE_CONDITIONS, universal_threshold
from .trainer import EncoderParams, Layout, TrainConfig, init_params, layout_for, train

log = logging.getLogger("avsan")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# -- helpers ----------------------------------------------------------------


def _csv_list(text, conv=str):
    return [conv(x) for x in text.split(",") if x.strip()]


def _ckpt_paths(path):
    path = Path(path)
    if path.is_dir():
        path = path / "ckpt.avst"
    return path, path.with_suffix(".json")


def save_checkpoint(path, params, cfg, data_cfg):
    tensor_path, meta_path = _ckpt_paths(path)
    tensor_path.parent.mkdir(parents=True, exist_ok=True)
    fileio.write_tensor(tensor_path, params.as_vector())
    meta = {
        "format": "avst-flat-params",
        "layout": params.layout.to_dict(),
        "n_params": int(params.as_vector().size),
        "train_config": cfg.to_dict(),
        "data_config": asdict(data_cfg),
        "tool_version": __version__,
    }
    fileio.dump_json(meta, meta_path)
    return tensor_path


def load_checkpoint(path):
    tensor_path, meta_path = _ckpt_paths(path)
    meta = json.loads(meta_path.read_text())
    layout = Layout(**meta["layout"])
    return EncoderParams.from_vector(layout, fileio.read_tensor(tensor_path)), meta


def _embedding_dirs(out):
    out = Path(out)
    for sub in ("maps", "audio", "visual"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    return out


def write_embeddings(out, embedded, meta):
    out = _embedding_dirs(out)
    index = []
    for e in embedded:
        fileio.write_tensor(out / "maps" / f"{e.id}.avst", e.maps)
        fileio.write_tensor(out / "audio" / f"{e.id}.avst", e.audio)
        fileio.write_tensor(out / "visual" / f"{e.id}.avst", e.visual)
        index.append({"id": e.id, "split": e.split, "class_labels": e.class_labels,
                      "conditions": e.conditions})
    fileio.dump_json({"samples": index, "checkpoint": meta}, out / "index.json")


def read_embeddings(root):
    root = Path(root)
    index = json.loads((root / "index.json").read_text())
    rows = []
    for item in index["samples"]:
        sid = item["id"]
        rows.append({
            **item,
            "maps": fileio.read_tensor(root / "maps" / f"{sid}.avst"),
            "audio": fileio.read_tensor(root / "audio" / f"{sid}.avst"),
            "visual": fileio.read_tensor(root / "visual" / f"{sid}.avst"),
        })
    return rows, index


def build_report(records, threshold, provenance):
    rep = evaluate(records, threshold)
    out = rep.to_dict()
    out["maxima"] = rep.maxima
    out["provenance"] = provenance
    return out


def check_report(d, tol=1e-9):
    """Raise if the stored F scores cannot be re-derived from the report."""
    fl = f_loc(d["ciou_uth"], d["pia"])
    fa = f_auc(d["auc_uth"], d["auc_n"])
    if abs(fl - d["f_loc"]) > tol or abs(fa - d["f_auc"]) > tol:
        raise ValidationError("report is not self-consistent")
    return True


# -- commands ---------------------------------------------------------------


def cmd_gen(args):
    cfg = DataConfig(n_classes=args.classes, n_train=args.train, n_eval=args.eval,
                     n_calib=args.calib if args.calib is not None else args.eval,
                     seed=args.seed, grid_h=args.grid, grid_w=args.grid)
    ds = gen_dataset(cfg, workers=args.workers)
    manifest = write_dataset(ds, args.out, workers=args.workers)
    print(json.dumps({"manifest": str(manifest), "samples": len(ds.samples)}))


def _train_config(args):
    base = {}
    if args.config:
        base = json.loads(Path(args.config).read_text())
    cfg = TrainConfig.from_dict(base)
    overrides = {
        "lambda_sn": args.lambda_sn, "lambda_geo": args.lambda_geo, "alpha_max": args.alpha_max,
        "alpha_ramp_epochs": args.alpha_ramp, "epochs": args.epochs, "seed": args.seed,
        "learning_rate": args.lr, "batch_size": args.batch_size,
    }
    for k, v in overrides.items():
        if v is not None:
            setattr(cfg, k, v)
    if args.no_sam:
        cfg.sam_enabled = False
    if args.no_geo:
        cfg.geo_enabled = False
    if args.no_mask:
        cfg.mask_enabled = False
    return cfg.validate()


def cmd_train(args):
    cfg = _train_config(args)
    ds = load_dataset(args.data, splits=("train",))
    params, history = train(cfg, ds)
    out = Path(args.out) if args.out else Path(args.data) / "run"
    ckpt = save_checkpoint(out / "ckpt.avst", params, cfg, ds.config)
    fileio.dump_json({"config": cfg.to_dict(), "history": history}, out / "history.json")
    print(json.dumps({"checkpoint": str(ckpt), "epochs": cfg.epochs}))


def cmd_embed(args):
    params, meta = load_checkpoint(args.ckpt)
    manifest = Path(args.manifest)
    splits = tuple(_csv_list(args.splits))
    ds = load_dataset(manifest.parent, manifest, splits=splits)
    embedded = embed_dataset(params, ds, splits)
    write_embeddings(args.out, embedded, meta)
    print(json.dumps({"embedded": len(embedded), "out": str(args.out)}))


def _load_records(rows, manifest, root, split):
    by_id = {e["id"]: e for e in manifest}
    records = []
    for r in rows:
        if r["split"] != split:
            continue
        entry = by_id.get(r["id"])
        if entry is None:
            raise ValidationError(f"sample {r['id']} missing from manifest")
        conds = r["conditions"]
        neg = {c: r["maps"][conds.index(c)] for c in NEGATIVE_CONDITIONS}
        for k, label in enumerate(entry["class_labels"]):
            gt = fileio.read_tensor(root / entry["gt_paths"][k]) > 0.5
            records.append(EvalRecord(
                id=f"{r['id']}:{k}", class_label=label, pos_map=r["maps"][k], neg_maps=neg,
                gt=GroundTruthRegion(gt), pooled=PooledPair(r["audio"][k], r["visual"])))
    return records


def cmd_eval(args):
    conditions = tuple(_csv_list(args.calib_conditions))
    bad = set(conditions) - set(NEGATIVE_CONDITIONS)
    if bad or not conditions:
        raise ValidationError(f"bad calibration conditions {sorted(bad) or conditions}")
    manifest_path = Path(args.manifest)
    manifest = fileio.read_manifest(manifest_path)
    rows, index = read_embeddings(args.maps)
    calib = [r for r in rows if r["split"] == "calib"]
    neg_max = [max_pool(r["maps"][r["conditions"].index(c)]) for r in calib
               for c in NEGATIVE_CONDITIONS if c in conditions]
    th = universal_threshold(neg_max, conditions)
    records = _load_records(rows, manifest, manifest_path.parent, "eval")
    provenance = {
        "tool_version": __version__,
        "config_hash": fileio.sha256_json({"checkpoint": index.get("checkpoint"),
                                           "calib_conditions": list(conditions)}),
        "dataset_hash": fileio.sha256_bytes(manifest_path.read_bytes()),
        "theta": th.theta,
        "n_calibration": th.n_calibration,
        "calib_conditions": list(conditions),
        "auc_grid": {"iou": IOU_GRID.tolist(), "pia": PIA_GRID.tolist(), "rule": "trapezoid"},
        "quantile_method": "linear",
        "timestamp": args.timestamp or datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    report = build_report(records, th, provenance)
    check_report(report)
    fileio.dump_json(report, args.out)
    print(json.dumps({"report": str(args.out), "ciou_uth": report["ciou_uth"], "f_loc": report["f_loc"]}))


def embedding_sets(rows, split="eval"):
    audio, images = [], []
    for r in rows:
        if r["split"] != split:
            continue
        label = r["class_labels"][0]
        audio.append(EmbeddingItem(r["id"], label, r["audio"][0], "audio"))
        images.append(EmbeddingItem(r["id"], label, r["visual"], "image"))
    return EmbeddingSet(audio), EmbeddingSet(images)


def cmd_retrieve(args):
    rows, _ = read_embeddings(args.embeddings)
    audio, images = embedding_sets(rows, args.split)
    ks = _csv_list(args.k, int)
    table = retrieval_table(audio, images, ks, args.direction)
    out = {"direction": args.direction, "split": args.split, "n_queries": len(images), "scores": table}
    text = fileio.dump_json(out, args.out)
    if not args.out:
        sys.stdout.write(text)


TABLE_COLUMNS = [
    ("cIoU_Uth", lambda d: d["ciou_uth"]), ("AUC_Uth", lambda d: d["auc_uth"]),
    ("cIoU_Adap", lambda d: d["ciou_adap"]), ("AUC_Adap", lambda d: d["auc_adap"]),
    ("pIA_S", lambda d: d["pia"]["silence"]), ("AUCN_S", lambda d: d["auc_n"]["silence"]),
    ("pIA_N", lambda d: d["pia"]["noise"]), ("AUCN_N", lambda d: d["auc_n"]["noise"]),
    ("pIA_O", lambda d: d["pia"]["offscreen"]), ("AUCN_O", lambda d: d["auc_n"]["offscreen"]),
    ("F_LOC", lambda d: d["f_loc"]), ("F_AUC", lambda d: d["f_auc"]),
    ("Sep", lambda d: d["separability"]), ("Align", lambda d: d["alignment"]),
    ("Mag", lambda d: d["magnitude"]),
]


def _cell(col, v):
    if v is None:
        return ""
    # embedding-space columns are on a unit scale, the rest are percentages
    return f"{v:.3f}" if col in ("Sep", "Align", "Mag") else f"{v:.2f}"


def format_table(rows, fmt):
    header = ["model"] + [c for c, _ in TABLE_COLUMNS]
    body = [[name] + [_cell(c, f(d)) for c, f in TABLE_COLUMNS] for name, d in rows]
    if fmt == "csv":
        return "\n".join(",".join(r) for r in [header] + body) + "\n"
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(r) + " |" for r in body]
    return "\n".join(lines) + "\n"


def cmd_report(args):
    rows, box = [], []
    for p in args.inputs:
        d = json.loads(Path(p).read_text())
        check_report(d)
        name = Path(p).stem
        rows.append((name, d))
        box.append(fileio.export_boxplot_stats(d["maxima"], d["theta"], label=name))
    table = format_table(rows, args.format)
    # one header for the concatenated boxplot blocks
    box_csv = box[0] + "".join(b.split("\n", 1)[1] for b in box[1:])
    if args.out:
        Path(args.out).write_text(table)
    else:
        sys.stdout.write(table)
    if args.boxplot:
        Path(args.boxplot).write_text(box_csv)
    elif not args.out:
        sys.stdout.write("\n" + box_csv)


def _parse_grid(specs):
    axes = []
    for spec in specs:
        if "=" not in spec:
            raise ConfigError(f"grid entry {spec!r} is not name=v1,v2,...")
        name, values = spec.split("=", 1)
        field = name.replace("-", "_")
        if field not in TrainConfig.__dataclass_fields__:
            raise ConfigError(f"unknown config field {name!r}")
        kind = type(getattr(TrainConfig(), field))
        conv = (lambda s: s.lower() in ("1", "true", "yes")) if kind is bool else kind
        axes.append((field, [conv(v) for v in values.split(",")]))
    return axes


def run_arm(cfg, ds):
    params, _ = train(cfg, ds)
    report, th = calibrate_and_evaluate(embed_dataset(params, ds))
    out = report.to_dict()
    out["mean_max"] = {k: float(np.mean(v)) for k, v in report.maxima.items()}
    return out


def ablation(axes, seeds, base_cfg, data_kwargs, seed_offset=0, progress=None):
    """Paired runs: every grid point shares dataset and init seed per seed index."""
    runs = []
    for s in range(seeds):
        seed = seed_offset + s
        ds = gen_dataset(DataConfig(seed=seed, **data_kwargs))
        for point in itertools.product(*[vals for _, vals in axes]):
            cfg = TrainConfig.from_dict({**base_cfg.to_dict(), "seed": seed})
            for (field, _), v in zip(axes, point):
                setattr(cfg, field, v)
            res = run_arm(cfg.validate(), ds)
            row = {"seed": seed, **{f: v for (f, _), v in zip(axes, point)}, "report": res}
            runs.append(row)
            if progress:
                progress(row)
    return runs


SUMMARY_KEYS = [("cIoU_Uth", "ciou_uth"), ("pIA_S", ("pia", "silence")), ("pIA_N", ("pia", "noise")),
                ("pIA_O", ("pia", "offscreen")), ("F_LOC", "f_loc"), ("Sep", "separability")]


def summarize(runs, axes):
    groups = {}
    for r in runs:
        key = tuple(r[f] for f, _ in axes)
        groups.setdefault(key, []).append(r["report"])
    out = []
    for key, reps in groups.items():
        row = dict(zip([f for f, _ in axes], key))
        for label, path in SUMMARY_KEYS:
            vals = [rep[path] if isinstance(path, str) else rep[path[0]][path[1]] for rep in reps]
            row[label] = {"mean": float(np.mean(vals)), "std": float(np.std(vals)), "values": vals}
        out.append(row)
    return out


def cmd_ablate(args):
    axes = _parse_grid(args.grid)
    base = TrainConfig()
    if args.epochs is not None:
        base.epochs = args.epochs
    data_kwargs = {"n_classes": args.classes, "n_train": args.train, "n_eval": args.eval,
                   "n_calib": args.eval}
    runs = ablation(axes, args.seeds, base, data_kwargs, args.seed_offset,
                    progress=lambda r: log.info("seed %s done", r["seed"]))
    summary = summarize(runs, axes)
    names = [f for f, _ in axes]
    header = names + [k for k, _ in SUMMARY_KEYS]
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    for row in summary:
        cells = [str(row[n]) for n in names]
        cells += [f"{row[k]['mean']:.2f} ± {row[k]['std']:.2f}" for k, _ in SUMMARY_KEYS]
        lines.append("| " + " | ".join(cells) + " |")
    sys.stdout.write("\n".join(lines) + "\n")
    if args.out:
        fileio.dump_json({"grid": {f: v for f, v in axes}, "seeds": args.seeds,
                          "summary": summary, "runs": runs}, args.out)


# -- parser -----------------------------------------------------------------


def build_parser():
    p = _Parser(prog="avsan", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    g.add_argument("--classes", type=int, default=3)
    g.add_argument("--train", type=int, default=200)
    g.add_argument("--eval", type=int, default=64)
    g.add_argument("--calib", type=int, default=None, help="defaults to --eval")
    g.add_argument("--grid", type=int, default=8)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train encoders on a generated dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--config", help="JSON file with TrainConfig fields")
    t.add_argument("--out")
    t.add_argument("--lambda-sn", type=float)
    t.add_argument("--lambda-geo", type=float)
    t.add_argument("--alpha-max", type=float)
    t.add_argument("--alpha-ramp", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--no-sam", action="store_true")
    t.add_argument("--no-geo", action="store_true")
    t.add_argument("--no-mask", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("embed", help="write similarity maps and embeddings")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--manifest", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--splits", default="calib,eval")
    e.set_defaults(func=cmd_embed)

    v = sub.add_parser("eval", help="calibrate the universal threshold and score the eval split")
    v.add_argument("--maps", required=True)
    v.add_argument("--manifest", required=True)
    v.add_argument("--calib-conditions", default="silence,noise,offscreen")
    v.add_argument("--out", required=True)
    v.add_argument("--timestamp", help="fixed provenance timestamp for reproducible reports")
    v.set_defaults(func=cmd_eval)

    r = sub.add_parser("retrieve", help="cross-modal retrieval P@K / A@K")
    r.add_argument("--embeddings", required=True)
    r.add_argument("--direction", choices=("i2a", "a2i"), default="i2a")
    r.add_argument("--k", default="1,5,10")
    r.add_argument("--split", default="eval")
    r.add_argument("--out")
    r.set_defaults(func=cmd_retrieve)

    rp = sub.add_parser("report", help="comparison table and boxplot CSV from reports")
    rp.add_argument("--inputs", nargs="+", required=True)
    rp.add_argument("--format", choices=("csv", "md"), default="md")
    rp.add_argument("--out")
    rp.add_argument("--boxplot")
    rp.set_defaults(func=cmd_report)

    a = sub.add_parser("ablate", help="paired-seed grid over training hyperparameters")
    a.add_argument("--grid", nargs="+", required=True, help="e.g. lambda-sn=0,0.5,1")
    a.add_argument("--seeds", type=int, default=5)
    a.add_argument("--seed-offset", type=int, default=0)
    a.add_argument("--epochs", type=int)
    a.add_argument("--classes", type=int, default=3)
    a.add_argument("--train", type=int, default=200)
    a.add_argument("--eval", type=int, default=64)
    a.add_argument("--out")
    a.set_defaults(func=cmd_ablate)
    return p


def _fail(code, kind, message, field=None):
    err = {"error": kind, "message": message, "exit_code": code}
    if field:
        err["field"] = field
    sys.stderr.write(json.dumps(err) + "\n")
    return code


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail(1, "UsageError", str(exc))
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        args.func(args)
    except AvsanError as exc:
        return _fail(exc.exit_code, type(exc).__name__, str(exc), getattr(exc, "field", None))
    except (OSError, json.JSONDecodeError) as exc:
        code = 3 if isinstance(exc, json.JSONDecodeError) else 2
        return _fail(code, type(exc).__name__, str(exc))
    except (FloatingPointError, ArithmeticError) as exc:
        return _fail(4, type(exc).__name__, str(exc))
    except (KeyError, TypeError, ValueError) as exc:
        return _fail(3, type(exc).__name__, str(exc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
