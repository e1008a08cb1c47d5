"""Similarity maps and pooling.

Arrays follow a fixed convention: an audio embedding is a 1-D array of
length ``c``, a visual feature map is ``(c, h, w)``, a similarity map is
``(h, w)``. Everything is float64.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyMap, LengthMismatch, ZeroNorm


@dataclass(frozen=True)
class PooledPair:
    """Audio embedding next to the spatially pooled visual embedding."""

    audio: np.ndarray
    visual_pooled: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.audio, dtype=np.float64)
        v = np.asarray(self.visual_pooled, dtype=np.float64)
        if a.shape != v.shape or a.ndim != 1:
            raise LengthMismatch(f"pooled pair lengths differ: {a.shape} vs {v.shape}")
        object.__setattr__(self, "audio", a)
        object.__setattr__(self, "visual_pooled", v)


def cosine_similarity_map(a, v):
    """Cosine similarity between ``a`` and every spatial column of ``v``."""
    a = np.asarray(a, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if a.ndim != 1 or v.ndim != 3:
        raise DimensionMismatch(f"expected a:(c,) and v:(c,h,w), got {a.shape} and {v.shape}")
    if a.shape[0] != v.shape[0]:
        raise DimensionMismatch(f"channel count {a.shape[0]} != {v.shape[0]}")
    na = np.linalg.norm(a)
    if na == 0.0:
        raise ZeroNorm("audio embedding has zero norm")
    nv = np.sqrt(np.einsum("chw,chw->hw", v, v))
    if np.any(nv == 0.0):
        y, x = np.argwhere(nv == 0.0)[0]
        raise ZeroNorm(f"visual column ({y}, {x}) has zero norm")
    s = np.einsum("c,chw->hw", a, v) / (na * nv)
    # rounding can leave |s| a few ulps above 1
    return np.clip(s, -1.0, 1.0)


def max_pool(s):
    s = np.asarray(s, dtype=np.float64)
    if s.size == 0:
        raise EmptyMap("cannot pool an empty map")
    return float(s.max())


def avg_pool(s):
    s = np.asarray(s, dtype=np.float64)
    if s.size == 0:
        raise EmptyMap("cannot pool an empty map")
    return float(s.mean())


def mean_pool_visual(v):
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 3 or v.shape[1] * v.shape[2] == 0:
        raise EmptyMap(f"visual map has no spatial cells: shape {v.shape}")
    return v.mean(axis=(1, 2))


def l2_norm(x):
    return float(np.sqrt(np.dot(x, x)))


def l2_distance(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise LengthMismatch(f"{x.shape} vs {y.shape}")
    return l2_norm(x - y)


def cosine(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise LengthMismatch(f"{x.shape} vs {y.shape}")
    nx, ny = l2_norm(x), l2_norm(y)
    if nx == 0.0 or ny == 0.0:
        raise ZeroNorm("cosine of a zero vector")
    return float(np.clip(np.dot(x, y) / (nx * ny), -1.0, 1.0))
