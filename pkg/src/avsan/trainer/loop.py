"""Deterministic optimization loop."""

import logging
from dataclasses import asdict, dataclass, fields

import numpy as np

from ..core import cosine_similarity_map, max_pool
from ..errors import ConfigError, EmptyInput
from ..rng import CounterRNG, derive_key
from ..synthdata import featurize, gen_noise
from .augment import alpha_schedule, feature_masking, find_similar_audio, random_transform, sam_mix
from .encoders import Layout, audio_encoder, audio_input, init_params, mlp_forward, visual_encoder
from .losses import Batch, loss_weights, objective, silence_embedding

log = logging.getLogger(__name__)

# salts for the per-(epoch, step, item) random streams
_SHUFFLE, _MASK, _GEO, _NOISE, _PROBE = 0x5F, 0x3A, 0x6E, 0x40, 0x9B


@dataclass
class TrainConfig:
    c: int = 16
    hidden: int = 32
    batch_size: int = 32
    epochs: int = 60
    learning_rate: float = 1e-2
    temperature: float = 0.07
    lambda_sn: float = 1.0
    lambda_geo: float = 1.0
    alpha_max: float = 0.5
    alpha_ramp_epochs: int = 50
    sam_enabled: bool = True
    geo_enabled: bool = True
    mask_enabled: bool = True
    max_shift: int = 2
    mask_max_frames: int = 4
    mask_max_bands: int = 1
    seed: int = 0
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    probe_size: int = 32

    def validate(self):
        for name in ("c", "hidden", "batch_size", "temperature", "learning_rate"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 for in-batch negatives")
        if self.epochs < 0 or self.lambda_sn < 0 or self.lambda_geo < 0:
            raise ConfigError("epochs and loss weights must be non-negative")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        return self

    def alpha(self, epoch):
        return alpha_schedule(epoch, self.alpha_max, self.alpha_ramp_epochs)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


class Adam:
    def __init__(self, size, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, x, g):
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * g
        self.v = self.b2 * self.v + (1 - self.b2) * g * g
        mh = self.m / (1 - self.b1**self.t)
        vh = self.v / (1 - self.b2**self.t)
        return x - self.lr * mh / (np.sqrt(vh) + self.eps)


class SGD:
    def __init__(self, size, lr):
        self.lr = lr

    def step(self, x, g):
        return x - self.lr * g


def layout_for(data_cfg, cfg):
    return Layout(audio_in=data_cfg.n_frames * data_cfg.n_bands, visual_in=data_cfg.descriptor_dim,
                  hidden=cfg.hidden, c=cfg.c)


def noise_features(cfg, data_cfg, epoch, step, item):
    w = gen_noise(data_cfg.wave_len, derive_key(cfg.seed, _NOISE, epoch, step, item))
    return featurize(w, data_cfg)


def make_batch(cfg, data_cfg, feats, images, idx, epoch, step):
    """Augment the items ``idx`` for one optimization step."""
    audio = feats[idx]
    if cfg.mask_enabled:
        audio = np.stack([
            feature_masking(a, CounterRNG.from_parts(cfg.seed, _MASK, epoch, step, j),
                            cfg.mask_max_frames, cfg.mask_max_bands)
            for j, a in enumerate(audio)])
    noise = np.stack([noise_features(cfg, data_cfg, epoch, step, j) for j in range(len(idx))])
    transforms = None
    if cfg.geo_enabled:
        square = data_cfg.grid_h == data_cfg.grid_w
        transforms = [random_transform(CounterRNG.from_parts(cfg.seed, _GEO, epoch, step, j),
                                       cfg.max_shift, square)
                      for j in range(len(idx))]
    return Batch(audio=audio, noise=noise, images=images[idx], transforms=transforms)


def probe_maxima(params, images, feats, noise):
    """Mean max-pooled similarity for positive, silence and noise audio."""
    a_sil = silence_embedding(params)
    out = {"positive": [], "silence": [], "noise": []}
    for img, f, nz in zip(images, feats, noise):
        v = visual_encoder(img, params)
        out["positive"].append(max_pool(cosine_similarity_map(audio_encoder(f, params), v)))
        out["silence"].append(max_pool(cosine_similarity_map(a_sil, v)))
        out["noise"].append(max_pool(cosine_similarity_map(audio_encoder(nz, params), v)))
    return {k: float(np.mean(v)) for k, v in out.items()}


def train(cfg, dataset, callback=None):
    """Train both encoders on the ``train`` split of ``dataset``.

    Returns ``(params, history)`` where history holds one dict per epoch
    with the mean loss breakdown and a probe of mean max-similarities.
    """
    cfg.validate()
    dcfg = dataset.config
    items = dataset.split("train")
    if not items:
        raise EmptyInput("dataset has no training samples")
    waves = np.stack([s.positives[0] for s in items])
    images = np.stack([s.scene.cells for s in items])
    clean = featurize(waves, dcfg)
    layout = layout_for(dcfg, cfg)
    params = init_params(layout, cfg.seed)
    x = params.as_vector()
    opt = (Adam(x.size, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps) if cfg.optimizer == "adam"
           else SGD(x.size, cfg.learning_rate))
    n = len(items)
    n_probe = min(cfg.probe_size, n)
    probe_noise = np.stack([featurize(gen_noise(dcfg.wave_len, derive_key(cfg.seed, _PROBE, i)), dcfg)
                            for i in range(n_probe)])
    weights = loss_weights(cfg)
    history = []
    for epoch in range(cfg.epochs):
        alpha = cfg.alpha(epoch) if cfg.sam_enabled else 0.0
        if alpha > 0:
            p = type(params).from_vector(layout, x)
            emb = mlp_forward(audio_input(clean), p.audio())[0]
            sim = find_similar_audio(emb)
            feats = featurize(sam_mix(waves, waves[sim], alpha), dcfg)
        else:
            feats = clean
        order = CounterRNG.from_parts(cfg.seed, _SHUFFLE, epoch).permutation(n)
        sums = np.zeros(5)
        n_steps = 0
        for step, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            if len(idx) < 2:
                continue
            batch = make_batch(cfg, dcfg, feats, images, idx, epoch, step)
            p = type(params).from_vector(layout, x)
            parts, g = objective(p, batch, cfg.temperature, weights)
            x = opt.step(x, g)
            sums += [parts.contrastive, parts.l_s, parts.l_n, parts.l_geo, parts.total]
            n_steps += 1
        params = type(params).from_vector(layout, x)
        mean = sums / max(n_steps, 1)
        rec = dict(zip(("contrastive", "l_s", "l_n", "l_geo", "total"), mean.tolist()))
        rec = {"epoch": epoch, "alpha": alpha, "steps": n_steps, "loss": rec,
               "probe_max": probe_maxima(params, images[:n_probe], clean[:n_probe], probe_noise)}
        history.append(rec)
        log.debug("epoch %d total %.4f", epoch, rec["loss"]["total"])
        if callback is not None:
            callback(rec)
    return params, history
