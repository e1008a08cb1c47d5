"""Contrastive, silence, noise and equivariance losses with exact gradients.

:func:`objective` evaluates every term on a prepared batch in one
vectorized pass and back-propagates by hand. The per-item functions
(:func:`contrastive_loss`, :func:`silence_loss`, ...) are direct
transcriptions built on :mod:`avsan.core` and serve as readable
references for the batched path.
"""

from dataclasses import dataclass

import numpy as np

from ..core import cosine_similarity_map, max_pool
from ..errors import BatchTooSmall, ShapeMismatch, ZeroNorm
from .augment import apply_geo_transform, gather_cells
from .encoders import EncoderParams, audio_encoder, audio_input, mlp_backward, mlp_forward, unpack, visual_encoder


@dataclass
class Batch:
    """A training batch after augmentation.

    ``audio`` and ``noise`` are ``(n, T, B)`` band-energy grids, ``images``
    is ``(n, h, w, d)``. ``transforms`` holds one GeoTransform per item, or
    None when the equivariance term is off.
    """

    audio: np.ndarray
    noise: np.ndarray
    images: np.ndarray
    transforms: list = None
    class_labels: list = None

    def __len__(self):
        return self.images.shape[0]


@dataclass
class LossBreakdown:
    contrastive: float
    l_s: float
    l_n: float
    l_geo: float
    total: float

    def to_dict(self):
        return {k: float(v) for k, v in self.__dict__.items()}


def _unit(x):
    n = np.sqrt(np.einsum("...c,...c->...", x, x))[..., None]
    if np.any(n == 0.0):
        raise ZeroNorm("encoder produced a zero embedding")
    return x / n, n


def _unit_backward(xh, n, dxh):
    return (dxh - xh * np.einsum("...c,...c->...", xh, dxh)[..., None]) / n


def _softmax(z, axis):
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def _logsumexp(z, axis):
    m = z.max(axis=axis, keepdims=True)
    return (m + np.log(np.exp(z - m).sum(axis=axis, keepdims=True))).squeeze(axis)


def objective(params, batch, temperature=0.07, weights=(1.0, 1.0, 1.0, 1.0), grad=True):
    """Weighted loss terms and the gradient of their weighted sum.

    ``weights`` scales (contrastive, silence, noise, equivariance). Returns
    ``(LossBreakdown, gradient)``; the gradient is a flat vector in the
    layout of ``params.as_vector()`` or None when ``grad`` is False.
    """
    w_con, w_s, w_n, w_geo = weights
    n = len(batch)
    if n < 2:
        raise BatchTooSmall(f"contrastive loss needs n >= 2, got {n}")
    lay = params.layout
    aw, vw = params.audio(), params.visual()
    n_img, h, w, d = batch.images.shape
    P = h * w
    use_geo = batch.transforms is not None

    # forward: audio rows are [positives | silence | noise]
    feats = np.concatenate([batch.audio, np.zeros((1,) + batch.audio.shape[1:]), batch.noise])
    xa = audio_input(feats)
    if xa.shape[-1] != lay.audio_in:
        raise ShapeMismatch(f"audio input size {xa.shape[-1]} != {lay.audio_in}")
    ya, ha = mlp_forward(xa, aw)
    yah, yan = _unit(ya)
    ah, ash, anh = yah[:n], yah[n], yah[n + 1 :]

    xv = batch.images.reshape(n, P, d)
    if use_geo:
        src = np.stack([t.source_index(h, w) for t in batch.transforms])
        xv = np.concatenate([xv, gather_cells(xv, src)])
    yv, hv = mlp_forward(xv, vw)
    yvh, yvn = _unit(yv)
    vh = yvh[:n]

    s = np.einsum("ic,jpc->ijp", ah, vh)
    arg = s.argmax(axis=-1)
    logits = np.take_along_axis(s, arg[..., None], axis=-1)[..., 0] / temperature
    diag = np.diagonal(logits)
    contrastive = 0.5 * (np.mean(_logsumexp(logits, 1) - diag) + np.mean(_logsumexp(logits, 0) - diag))

    s_sil = np.einsum("c,jpc->jp", ash, vh)
    s_noi = np.einsum("jc,jpc->jp", anh, vh)
    l_s = np.mean(np.sum(s_sil**2, axis=1))
    l_n = np.mean(np.sum(s_noi**2, axis=1))

    l_geo = 0.0
    if use_geo:
        vth = yvh[n:]
        s_diag = np.einsum("jc,jpc->jp", ah, vh)
        s_t = np.einsum("jc,jpc->jp", ah, vth)
        target = gather_cells(s_diag[..., None], src)[..., 0]
        resid = s_t - target
        l_geo = np.mean(np.sum(resid**2, axis=1))

    total = w_con * contrastive + w_s * l_s + w_n * l_n + w_geo * l_geo
    parts = LossBreakdown(float(contrastive), float(l_s), float(l_n), float(l_geo), float(total))
    if not grad:
        return parts, None

    # backward
    eye = np.eye(n)
    dlog = w_con * 0.5 / n * ((_softmax(logits, 1) - eye) + (_softmax(logits, 0) - eye))
    ds = np.zeros_like(s)
    np.put_along_axis(ds, arg[..., None], (dlog / temperature)[..., None], axis=-1)
    d_ah = np.einsum("ijp,jpc->ic", ds, vh)
    d_vh = np.einsum("ijp,ic->jpc", ds, ah)

    ds_sil = (2.0 * w_s / n) * s_sil
    d_ash = np.einsum("jp,jpc->c", ds_sil, vh)
    d_vh += ds_sil[..., None] * ash

    ds_noi = (2.0 * w_n / n) * s_noi
    d_anh = np.einsum("jp,jpc->jc", ds_noi, vh)
    d_vh += ds_noi[..., None] * anh[:, None, :]

    d_yvh = np.zeros_like(yvh)
    if use_geo:
        ds_t = (2.0 * w_geo / n) * resid
        valid = src >= 0
        rows = np.broadcast_to(np.arange(n)[:, None], src.shape)
        ds_diag = np.zeros((n, P))
        np.add.at(ds_diag, (rows[valid], src[valid]), -ds_t[valid])
        d_ah += np.einsum("jp,jpc->jc", ds_t, vth) + np.einsum("jp,jpc->jc", ds_diag, vh)
        d_vh += ds_diag[..., None] * ah[:, None, :]
        d_yvh[n:] = ds_t[..., None] * ah[:, None, :]
    d_yvh[:n] = d_vh

    d_yah = np.concatenate([d_ah, d_ash[None], d_anh])
    g = np.zeros(params.audio_weights.size + params.visual_weights.size)
    ga = unpack(g[: params.audio_weights.size], lay, "audio")
    gv = unpack(g[params.audio_weights.size :], lay, "visual")
    mlp_backward(xa, ha, _unit_backward(yah, yan, d_yah), aw, ga)
    mlp_backward(xv, hv, _unit_backward(yvh, yvn, d_yvh), vw, gv)
    return parts, g


def loss_weights(cfg):
    return (1.0, cfg.lambda_sn, cfg.lambda_sn, cfg.lambda_geo if cfg.geo_enabled else 0.0)


def total_loss(batch, params, cfg):
    """contrastive + lambda_sn * (L_S + L_N) + lambda_geo * L_geo, batch means."""
    parts, _ = objective(params, batch, cfg.temperature, loss_weights(cfg), grad=False)
    return parts


def backward(batch, params, cfg):
    return objective(params, batch, cfg.temperature, loss_weights(cfg), grad=True)[1]


# -- per-item reference forms -------------------------------------------------


def silence_embedding(params):
    zeros = np.zeros(params.layout.audio_in)
    return mlp_forward(zeros, params.audio())[0]


def contrastive_loss(audio_embs, visual_maps, temperature=0.07):
    """Symmetric InfoNCE over max-pooled similarity-map logits."""
    n = len(audio_embs)
    if n < 2 or len(visual_maps) != n:
        raise BatchTooSmall(f"need matching batches of n >= 2, got {n} and {len(visual_maps)}")
    logits = np.array([[max_pool(cosine_similarity_map(a, v)) / temperature for v in visual_maps]
                       for a in audio_embs])
    diag = np.diagonal(logits)
    rows = _logsumexp(logits, 1) - diag
    cols = _logsumexp(logits, 0) - diag
    return float(0.5 * (rows.mean() + cols.mean()))


def silence_loss(v, params):
    s = cosine_similarity_map(silence_embedding(params), v)
    return float(np.sum(s * s))


def noise_loss(v, noise_features, params):
    s = cosine_similarity_map(audio_encoder(noise_features, params), v)
    return float(np.sum(s * s))


def geo_equivariance_loss(a, v, t, params, image):
    """Squared distance between the map of the transformed image and the
    transformed map of the original image."""
    s_t = cosine_similarity_map(a, visual_encoder(apply_geo_transform(image, t), params))
    target = apply_geo_transform(cosine_similarity_map(a, v), t)
    return float(np.sum((s_t - target) ** 2))
