"""On-disk formats: AVST tensors, JSONL manifests, JSON reports, CSV exports.

AVST layout (all little-endian)::

    offset 0   4 bytes   magic b"AVST"
    offset 4   u8        version (1)
    offset 5   u8        dtype (0 = float64)
    offset 6   u8        ndim
    offset 7   u8        reserved (0)
    offset 8   ndim*u64  dims
    ...        payload   prod(dims) float64 values, row-major
"""

import csv
import hashlib
import io as _io
import json
import struct
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    BadVersion,
    FileFormatError,
    SizeMismatch,
    TooFewSamples,
    TruncatedFile,
    ValidationError,
)
from .thresholding import quantile

MAGIC = b"AVST"
VERSION = 1
DTYPE_F64 = 0
_LE_F64 = np.dtype("<f8")


def encode_tensor(t):
    a = np.array(t, dtype=np.float64, order="C")  # ascontiguousarray would promote 0-d to 1-d
    if a.ndim > 255:
        raise ValidationError("AVST supports at most 255 dimensions")
    header = MAGIC + struct.pack("<BBBB", VERSION, DTYPE_F64, a.ndim, 0)
    header += struct.pack(f"<{a.ndim}Q", *a.shape)
    return header + a.astype(_LE_F64, copy=False).tobytes(order="C")


def decode_tensor(buf, name="<bytes>"):
    if len(buf) < 8:
        raise TruncatedFile(f"{name}: header is {len(buf)} bytes, need 8", field="header")
    if buf[:4] != MAGIC:
        raise BadMagic(f"{name}: magic {buf[:4]!r} != {MAGIC!r}", field="magic")
    version, dtype, ndim, reserved = struct.unpack_from("<BBBB", buf, 4)
    if version != VERSION:
        raise BadVersion(f"{name}: version {version} unsupported", field="version")
    if dtype != DTYPE_F64:
        raise FileFormatError(f"{name}: dtype code {dtype} unsupported", field="dtype")
    if reserved != 0:
        raise FileFormatError(f"{name}: reserved byte is {reserved}", field="reserved")
    off = 8 + 8 * ndim
    if len(buf) < off:
        raise TruncatedFile(f"{name}: dims need {off} header bytes, file has {len(buf)}", field="dims")
    dims = struct.unpack_from(f"<{ndim}Q", buf, 8)
    expected = 8 * int(np.prod(dims, dtype=np.uint64)) if ndim else 8
    got = len(buf) - off
    if got < expected:
        raise TruncatedFile(f"{name}: payload {got} bytes < {expected}", field="payload")
    if got > expected:
        raise SizeMismatch(f"{name}: payload {got} bytes > {expected}", field="payload")
    a = np.frombuffer(buf, dtype=_LE_F64, offset=off).astype(np.float64)
    return a.reshape(dims)


def write_tensor(path, t):
    Path(path).write_bytes(encode_tensor(t))


def read_tensor(path):
    return decode_tensor(Path(path).read_bytes(), name=str(path))


# -- manifests --------------------------------------------------------------

MANIFEST_FIELDS = ("id", "split", "class_labels", "image_path", "audio_paths", "gt_paths", "seed")


def write_manifest(path, entries):
    lines = [json.dumps(e, sort_keys=True, ensure_ascii=False) for e in entries]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_manifest(path, check_paths=True):
    path = Path(path)
    entries, seen = [], set()
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        e = json.loads(line)
        missing = [f for f in MANIFEST_FIELDS if f not in e]
        if missing:
            raise ValidationError(f"{path}:{lineno}: missing fields {missing}")
        if e["id"] in seen:
            raise ValidationError(f"{path}:{lineno}: duplicate id {e['id']!r}")
        seen.add(e["id"])
        if check_paths:
            for p in manifest_paths(e):
                if not (path.parent / p).exists():
                    raise FileNotFoundError(f"{path}:{lineno}: missing file {p}")
        entries.append(e)
    return entries


def manifest_paths(entry):
    yield entry["image_path"]
    ap = entry["audio_paths"]
    yield from ap.get("positive", [])
    for key in ("offscreen", "noise"):
        if ap.get(key):
            yield ap[key]
    yield from entry["gt_paths"]


# -- reports ----------------------------------------------------------------


def dump_json(obj, path=None):
    text = json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def sha256_bytes(data):
    return hashlib.sha256(data).hexdigest()


def sha256_json(obj):
    return sha256_bytes(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode())


# -- boxplot export ----------------------------------------------------------

BOXPLOT_HEADER = ("condition", "min", "q1", "median", "q3", "max", "n")


def boxplot_stats(values):
    xs = np.asarray(values, dtype=np.float64)
    if xs.size < 4:
        raise TooFewSamples(f"boxplot needs >= 4 values, got {xs.size}")
    return {
        "min": float(xs.min()),
        "q1": quantile(xs, 0.25),
        "median": quantile(xs, 0.5),
        "q3": quantile(xs, 0.75),
        "max": float(xs.max()),
        "n": int(xs.size),
    }


def export_boxplot_stats(maxima_by_condition, theta=None, label=None):
    """CSV text with one row per condition plus an optional threshold row."""
    buf = _io.StringIO()
    header = (("model",) if label is not None else ()) + BOXPLOT_HEADER
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    prefix = (label,) if label is not None else ()
    for cond, values in maxima_by_condition.items():
        st = boxplot_stats(values)
        w.writerow(prefix + (cond,) + tuple(repr(st[k]) for k in BOXPLOT_HEADER[1:-1]) + (st["n"],))
    if theta is not None:
        t = repr(float(theta))
        w.writerow(prefix + ("theta", t, t, t, t, t, 0))
    return buf.getvalue()


def parse_boxplot_csv(text):
    rows = list(csv.DictReader(_io.StringIO(text)))
    out = {}
    for r in rows:
        out[r["condition"]] = {k: (int(r[k]) if k == "n" else float(r[k])) for k in BOXPLOT_HEADER[1:]}
    return out
