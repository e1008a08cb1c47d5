"""Training-time augmentations: geometric transforms, feature masking,
similar-audio search and mixing."""

from dataclasses import dataclass

import numpy as np

from ..errors import BadTransform, LengthMismatch, TooFewSamples, ValidationError, ZeroNorm


@dataclass(frozen=True)
class GeoTransform:
    """A cell permutation with optional zero fill.

    ``kind`` is one of ``identity``, ``hflip``, ``translate`` (by ``dy, dx``
    cells, vacated cells become zero) or ``rot90`` (``k`` quarter turns
    counter-clockwise, as ``np.rot90``).
    """

    kind: str = "identity"
    dy: int = 0
    dx: int = 0
    k: int = 0

    def source_index(self, h, w):
        """For each output cell (row-major), the source cell index or -1."""
        idx = np.arange(h * w).reshape(h, w)
        if self.kind == "identity":
            out = idx
        elif self.kind == "hflip":
            out = idx[:, ::-1]
        elif self.kind == "rot90":
            if self.k % 2 and h != w:
                raise BadTransform(f"odd quarter turns need a square grid, got {h}x{w}")
            out = np.rot90(idx, self.k)
        elif self.kind == "translate":
            if abs(self.dy) >= h or abs(self.dx) >= w:
                raise BadTransform(f"shift ({self.dy}, {self.dx}) leaves nothing of a {h}x{w} grid")
            out = np.full((h, w), -1)
            ys = slice(max(self.dy, 0), h + min(self.dy, 0))
            xs = slice(max(self.dx, 0), w + min(self.dx, 0))
            yd = slice(max(-self.dy, 0), h + min(-self.dy, 0))
            xd = slice(max(-self.dx, 0), w + min(-self.dx, 0))
            out[ys, xs] = idx[yd, xd]
        else:
            raise BadTransform(f"unknown transform kind {self.kind!r}")
        return np.ascontiguousarray(out).ravel()

    def to_dict(self):
        return {"kind": self.kind, "dy": self.dy, "dx": self.dx, "k": self.k}


IDENTITY = GeoTransform()


def gather_cells(flat, src):
    """``flat[..., src, :]`` with ``src == -1`` mapped to zeros.

    ``flat`` is ``(..., P, d)`` and ``src`` is ``(..., P)``.
    """
    pad = np.zeros(flat.shape[:-2] + (1, flat.shape[-1]))
    padded = np.concatenate([flat, pad], axis=-2)
    src = np.where(src < 0, flat.shape[-2], src)
    return np.take_along_axis(padded, src[..., None], axis=-2)


def apply_geo_transform(x, t):
    """Apply ``t`` to an ``(h, w)`` map or an ``(h, w, d)`` image."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (2, 3):
        raise BadTransform(f"expected (h, w) or (h, w, d), got {x.shape}")
    h, w = x.shape[:2]
    flat = x.reshape(h * w, -1)
    out = gather_cells(flat, t.source_index(h, w))
    return out.reshape(x.shape)


def random_transform(rng, max_shift=2, square=True):
    kinds = ["hflip", "translate", "rot90"] if square else ["hflip", "translate"]
    kind = rng.choice(kinds)
    if kind == "hflip":
        return GeoTransform("hflip")
    if kind == "rot90":
        return GeoTransform("rot90", k=rng.integers(1, 4))
    dy, dx = rng.integers(-max_shift, max_shift + 1, 2)
    return GeoTransform("translate", dy=int(dy), dx=int(dx))


def mask_features(features, t0, t_span, b0, b_span):
    out = np.array(features, dtype=np.float64)
    out[t0 : t0 + t_span, :] = 0.0
    out[:, b0 : b0 + b_span] = 0.0
    return out


def feature_masking(features, rng, max_time=4, max_bands=1):
    """Zero one random span of frames and one random span of bands."""
    n_t, n_b = np.shape(features)
    t_span = rng.integers(0, min(max_time, n_t) + 1)
    b_span = rng.integers(0, min(max_bands, n_b) + 1)
    t0 = rng.integers(0, n_t - t_span + 1)
    b0 = rng.integers(0, n_b - b_span + 1)
    return mask_features(features, t0, t_span, b0, b_span)


def find_similar_audio(embeddings):
    """Index of the most cosine-similar other item; ties go to the smallest index."""
    e = np.asarray(embeddings, dtype=np.float64)
    if e.ndim != 2 or e.shape[0] < 2:
        raise TooFewSamples("similar-audio search needs at least 2 embeddings")
    n = np.linalg.norm(e, axis=1, keepdims=True)
    if np.any(n == 0):
        raise ZeroNorm("zero audio embedding in similar-audio search")
    u = e / n
    sim = u @ u.T
    np.fill_diagonal(sim, -np.inf)
    return np.argmax(sim, axis=1)


def sam_mix(w, w_sim, alpha):
    w = np.asarray(w, dtype=np.float64)
    w_sim = np.asarray(w_sim, dtype=np.float64)
    if w.shape != w_sim.shape:
        raise LengthMismatch(f"waveforms differ in length: {w.shape} vs {w_sim.shape}")
    if alpha < 0:
        raise ValidationError(f"mixing coefficient {alpha} < 0")
    return (1.0 - alpha) * w + alpha * w_sim


def alpha_schedule(epoch, alpha_max=0.5, ramp_epochs=50):
    """Linear ramp from 0 at epoch 0 to ``alpha_max`` at ``ramp_epochs``."""
    if epoch < 0:
        raise ValidationError("epoch must be >= 0")
    if ramp_epochs <= 0:
        return alpha_max
    return min(alpha_max, alpha_max * epoch / ramp_epochs)
