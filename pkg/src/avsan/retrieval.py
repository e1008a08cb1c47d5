"""Cross-modal retrieval scored by precision and accuracy at K."""

from dataclasses import dataclass

import numpy as np

from .errors import BadK, DimensionMismatch, EmptyGallery, ValidationError, ZeroNorm


@dataclass(frozen=True)
class EmbeddingItem:
    id: str
    class_label: str
    embedding: np.ndarray
    modality: str  # "audio" or "image"


class EmbeddingSet:
    def __init__(self, items):
        self.items = list(items)
        ids = [it.id for it in self.items]
        if len(set(ids)) != len(ids):
            raise ValidationError("embedding ids must be unique")
        if self.items:
            dims = {np.shape(it.embedding) for it in self.items}
            if len(dims) != 1:
                raise DimensionMismatch(f"mixed embedding shapes: {sorted(dims)}")
            mods = {it.modality for it in self.items}
            if len(mods) != 1:
                raise ValidationError(f"gallery mixes modalities: {sorted(mods)}")
        self._unit = None

    def __len__(self):
        return len(self.items)

    @property
    def modality(self):
        return self.items[0].modality if self.items else None

    def unit_matrix(self):
        if self._unit is None:
            m = np.array([it.embedding for it in self.items], dtype=np.float64)
            n = np.linalg.norm(m, axis=1, keepdims=True)
            if np.any(n == 0):
                raise ZeroNorm("gallery embedding with zero norm")
            self._unit = m / n
        return self._unit


def rank(query, gallery, k):
    """Ids of the ``k`` most cosine-similar gallery items, best first.

    Ties are broken by ascending id; a gallery item sharing the query id
    is skipped.
    """
    if len(gallery) == 0:
        raise EmptyGallery("empty gallery")
    if gallery.modality == query.modality:
        raise ValidationError("query and gallery must be different modalities")
    q = np.asarray(query.embedding, dtype=np.float64)
    nq = np.linalg.norm(q)
    if nq == 0:
        raise ZeroNorm(f"query {query.id} has zero norm")
    sims = gallery.unit_matrix() @ (q / nq)
    cands = [(-s, it.id) for s, it in zip(sims, gallery.items) if it.id != query.id]
    if not 1 <= k <= len(cands):
        raise BadK(f"k={k} outside [1, {len(cands)}]")
    cands.sort()
    return [cid for _, cid in cands[:k]]


def _hits(queries, gallery, k):
    labels = {it.id: it.class_label for it in gallery.items}
    for q in queries:
        top = rank(q, gallery, k)
        yield sum(labels[i] == q.class_label for i in top)


def precision_at_k(queries, gallery, k):
    hits = list(_hits(queries, gallery, k))
    if not hits:
        raise ValidationError("no queries")
    return 100.0 * sum(h / k for h in hits) / len(hits)


def accuracy_at_k(queries, gallery, k):
    hits = list(_hits(queries, gallery, k))
    if not hits:
        raise ValidationError("no queries")
    return 100.0 * sum(h > 0 for h in hits) / len(hits)


def retrieval_table(audio, images, ks, direction="i2a"):
    """P@K and A@K for every K in ``ks``."""
    if direction not in ("i2a", "a2i"):
        raise ValidationError(f"unknown direction {direction!r}")
    queries, gallery = (images, audio) if direction == "i2a" else (audio, images)
    out = {}
    for k in ks:
        out[f"P@{k}"] = precision_at_k(queries.items, gallery, k)
        out[f"A@{k}"] = accuracy_at_k(queries.items, gallery, k)
    return out
