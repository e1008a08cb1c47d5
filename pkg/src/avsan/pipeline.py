"""Embedding and evaluation glue shared by the CLI and the experiment scripts."""

from dataclasses import dataclass

import numpy as np

from .core import PooledPair, cosine_similarity_map, max_pool, mean_pool_visual
from .errors import ValidationError
from .metrics import EvalRecord, GroundTruthRegion, evaluate
from .synthdata import featurize
from .thresholding import NEGATIVE_CONDITIONS, universal_threshold
from .trainer.encoders import audio_encoder, visual_encoder
from .trainer.losses import silence_embedding


@dataclass
class Embedded:
    """Similarity maps and embeddings of one sample.

    ``conditions`` names the rows of ``maps`` and ``audio``:
    ``pos0 .. pos{K-1}, silence, noise, offscreen``.
    """

    id: str
    split: str
    class_labels: list
    maps: np.ndarray  # (K + 3, h, w)
    audio: np.ndarray  # (K + 3, c)
    visual: np.ndarray  # (c,)
    gt_masks: list

    @property
    def conditions(self):
        return [f"pos{k}" for k in range(len(self.class_labels))] + list(NEGATIVE_CONDITIONS)

    def map(self, cond):
        return self.maps[self.conditions.index(cond)]


def embed_sample(params, sample, data_cfg):
    v = visual_encoder(sample.scene.cells, params)
    feats = [featurize(w, data_cfg) for w in sample.positives]
    embs = [audio_encoder(f, params) for f in feats]
    embs.append(silence_embedding(params))
    embs.append(audio_encoder(featurize(sample.noise, data_cfg), params))
    embs.append(audio_encoder(featurize(sample.offscreen, data_cfg), params))
    maps = np.stack([cosine_similarity_map(a, v) for a in embs])
    return Embedded(
        id=sample.id,
        split=sample.split,
        class_labels=list(sample.class_labels),
        maps=maps,
        audio=np.stack(embs),
        visual=mean_pool_visual(v),
        gt_masks=list(sample.gt_masks),
    )


def embed_dataset(params, dataset, splits=("calib", "eval")):
    return [embed_sample(params, s, dataset.config) for s in dataset.samples if s.split in splits]


def negative_maxima(embedded, conditions=NEGATIVE_CONDITIONS):
    bad = set(conditions) - set(NEGATIVE_CONDITIONS)
    if bad:
        raise ValidationError(f"unknown calibration conditions {sorted(bad)}")
    return [max_pool(e.map(c)) for e in embedded for c in NEGATIVE_CONDITIONS if c in conditions]


def eval_records(embedded):
    """One record per (sample, visible object)."""
    out = []
    for e in embedded:
        neg = {c: e.map(c) for c in NEGATIVE_CONDITIONS}
        for k, label in enumerate(e.class_labels):
            out.append(EvalRecord(
                id=f"{e.id}:{k}",
                class_label=label,
                pos_map=e.maps[k],
                neg_maps=neg,
                gt=GroundTruthRegion(e.gt_masks[k]),
                pooled=PooledPair(e.audio[k], e.visual),
            ))
    return out


def calibrate_and_evaluate(embedded, conditions=NEGATIVE_CONDITIONS):
    """Threshold from the calib split, metrics on the eval split."""
    calib = [e for e in embedded if e.split == "calib"]
    evals = [e for e in embedded if e.split == "eval"]
    if not calib or not evals:
        raise ValidationError("need both calib and eval samples")
    th = universal_threshold(negative_maxima(calib, conditions), conditions)
    return evaluate(eval_records(evals), th), th
