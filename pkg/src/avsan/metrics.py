"""Localization, negative-audio and embedding-space metrics.

Percent-valued metrics are on a 0-100 scale. AUC curves use 21 evenly
spaced thresholds and the trapezoidal rule.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from .core import PooledPair, cosine, l2_distance, max_pool
from .errors import EmptyInput, ShapeMismatch, TooFewSamples, ValidationError
from .thresholding import (
    NEGATIVE_CONDITIONS,
    UniversalThreshold,
    binarize_adaptive,
    binarize_fixed,
    quantile,
)

IOU_GRID = np.arange(21) / 20.0
PIA_GRID = np.arange(21) * 5.0


@dataclass(frozen=True)
class GroundTruthRegion:
    mask: np.ndarray
    kind: str = "mask"
    bbox: tuple = None

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        if m.ndim != 2:
            raise ShapeMismatch(f"ground-truth mask must be 2-D, got {m.shape}")
        if not m.any():
            raise ValidationError("ground-truth region is empty")
        object.__setattr__(self, "mask", m)

    @property
    def area(self):
        return int(self.mask.sum())

    @classmethod
    def from_bbox(cls, bbox, h, w):
        """Rasterize ``(x0, y0, x1, y1)``, inclusive cell coordinates.

        A cell is marked when its center lies inside the box's continuous
        extent ``[x0, x1 + 1] x [y0, y1 + 1]``.
        """
        x0, y0, x1, y1 = bbox
        if not (0 <= x0 <= x1 < w and 0 <= y0 <= y1 < h):
            raise ValidationError(f"bbox {bbox} outside a {h}x{w} grid")
        cy = np.arange(h) + 0.5
        cx = np.arange(w) + 0.5
        rows = (cy >= y0) & (cy <= y1 + 1)
        cols = (cx >= x0) & (cx <= x1 + 1)
        return cls(mask=np.outer(rows, cols), kind="bbox", bbox=tuple(bbox))


@dataclass
class EvalRecord:
    id: str
    class_label: str
    pos_map: np.ndarray
    neg_maps: dict
    gt: GroundTruthRegion
    pooled: PooledPair

    def __post_init__(self):
        shape = np.shape(self.pos_map)
        for cond, m in self.neg_maps.items():
            if np.shape(m) != shape:
                raise ShapeMismatch(f"{self.id}: {cond} map {np.shape(m)} != {shape}")
        if self.gt.mask.shape != shape:
            raise ShapeMismatch(f"{self.id}: gt {self.gt.mask.shape} != {shape}")


@dataclass
class MetricsReport:
    ciou_uth: float
    ciou_adap: float
    auc_uth: float
    auc_adap: float
    pia: dict
    auc_n: dict
    f_loc: float
    f_auc: float
    separability: float
    alignment: float
    magnitude: float
    theta: float
    n_samples: int
    maxima: dict = field(default_factory=dict, repr=False)

    def to_dict(self):
        d = asdict(self)
        d.pop("maxima")
        return d


def _check_nonempty(xs, what):
    xs = np.asarray(xs, dtype=np.float64).ravel()
    if xs.size == 0:
        raise EmptyInput(f"{what}: empty input")
    return xs


def iou(mask, gt):
    mask = np.asarray(mask, dtype=bool)
    g = gt.mask if isinstance(gt, GroundTruthRegion) else np.asarray(gt, dtype=bool)
    if mask.shape != g.shape:
        raise ShapeMismatch(f"mask {mask.shape} vs ground truth {g.shape}")
    union = np.count_nonzero(mask | g)
    if union == 0:
        return 0.0
    return np.count_nonzero(mask & g) / union


def success_rate(ious, tau):
    ious = _check_nonempty(ious, "success_rate")
    return 100.0 * np.count_nonzero(ious > tau) / ious.size


def _trapezoid(ys, step):
    ys = np.asarray(ys, dtype=np.float64)
    return float(step * (ys[:-1] + ys[1:]).sum() / 2.0)


def auc(ious):
    """Area under the success-rate curve over thresholds 0, 0.05, ..., 1."""
    ious = _check_nonempty(ious, "auc")
    frac = [(ious > t).mean() for t in IOU_GRID]
    return 100.0 * _trapezoid(frac, 0.05)


def pia(mask):
    mask = np.asarray(mask, dtype=bool)
    return 100.0 * np.count_nonzero(mask) / mask.size


def auc_n(pias):
    """Area under the fraction-of-samples-with-pIA <= tau curve, tau in 0..100."""
    pias = _check_nonempty(pias, "auc_n")
    frac = [(pias <= t).mean() for t in PIA_GRID]
    return 100.0 * _trapezoid(frac, 0.05)


def harmonic_mean(a, b):
    if a + b == 0:
        return 0.0
    return 2.0 * a * b / (a + b)


def _three(values):
    if isinstance(values, dict):
        values = [values[c] for c in NEGATIVE_CONDITIONS]
    values = list(values)
    if len(values) != 3:
        raise ValidationError(f"expected three per-condition values, got {len(values)}")
    return values


def f_loc(ciou_uth, pia_by_condition):
    p = _three(pia_by_condition)
    return harmonic_mean(ciou_uth, 100.0 - sum(p) / 3.0)


def f_auc(auc_uth, auc_n_by_condition):
    a = _three(auc_n_by_condition)
    return harmonic_mean(auc_uth, sum(a) / 3.0)


def separability(pos_maxima, neg_maxima):
    pos = np.asarray(pos_maxima, dtype=np.float64).ravel()
    neg = np.asarray(neg_maxima, dtype=np.float64).ravel()
    if pos.size < 4 or neg.size < 4:
        raise TooFewSamples(f"need >= 4 values per side, got {pos.size} and {neg.size}")
    return quantile(pos, 0.25) - quantile(neg, 0.75)


def alignment(pairs):
    if not pairs:
        raise EmptyInput("alignment of no pairs")
    return float(np.mean([cosine(p.audio, p.visual_pooled) for p in pairs]))


def magnitude(pairs):
    if not pairs:
        raise EmptyInput("magnitude of no pairs")
    return float(np.mean([l2_distance(p.audio, p.visual_pooled) for p in pairs]))


def _record_scalars(rec, theta):
    out = {
        "iou_uth": iou(binarize_fixed(rec.pos_map, theta), rec.gt),
        "iou_adap": iou(binarize_adaptive(rec.pos_map, rec.gt.area), rec.gt),
        "max_pos": max_pool(rec.pos_map),
    }
    for cond in NEGATIVE_CONDITIONS:
        m = rec.neg_maps[cond]
        out[f"pia_{cond}"] = pia(binarize_fixed(m, theta))
        out[f"max_{cond}"] = max_pool(m)
    return out


def evaluate(records, threshold):
    """Assemble one report row from evaluation records.

    Per-record scalars are collected in record order and reduced
    sequentially, so the result does not depend on how they were computed.
    """
    if not records:
        raise EmptyInput("evaluate needs at least one record")
    theta = threshold.theta if isinstance(threshold, UniversalThreshold) else float(threshold)
    rows = [_record_scalars(r, theta) for r in records]
    col = lambda k: np.array([r[k] for r in rows])

    ciou_uth = success_rate(col("iou_uth"), 0.5)
    auc_uth = auc(col("iou_uth"))
    pias = {c: float(col(f"pia_{c}").mean()) for c in NEGATIVE_CONDITIONS}
    auc_ns = {c: auc_n(col(f"pia_{c}")) for c in NEGATIVE_CONDITIONS}
    maxima = {"positive": col("max_pos").tolist()}
    maxima.update({c: col(f"max_{c}").tolist() for c in NEGATIVE_CONDITIONS})
    neg_all = np.concatenate([col(f"max_{c}") for c in NEGATIVE_CONDITIONS])
    if len(records) >= 4:
        sep = separability(col("max_pos"), neg_all)
    else:
        sep = None
    pairs = [r.pooled for r in records]
    return MetricsReport(
        ciou_uth=ciou_uth,
        ciou_adap=success_rate(col("iou_adap"), 0.5),
        auc_uth=auc_uth,
        auc_adap=auc(col("iou_adap")),
        pia=pias,
        auc_n=auc_ns,
        f_loc=f_loc(ciou_uth, pias),
        f_auc=f_auc(auc_uth, auc_ns),
        separability=sep,
        alignment=alignment(pairs),
        magnitude=magnitude(pairs),
        theta=theta,
        n_samples=len(records),
        maxima=maxima,
    )
