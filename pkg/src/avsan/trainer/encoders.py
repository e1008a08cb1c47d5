"""Two-layer tanh encoders over flat parameter vectors."""

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ShapeMismatch
from ..rng import CounterRNG


@dataclass(frozen=True)
class Layout:
    audio_in: int
    visual_in: int
    hidden: int = 32
    c: int = 16

    def shapes(self, stream):
        n_in = self.audio_in if stream == "audio" else self.visual_in
        return [("W1", (self.hidden, n_in)), ("b1", (self.hidden,)),
                ("W2", (self.c, self.hidden)), ("b2", (self.c,))]

    def size(self, stream):
        return sum(int(np.prod(s)) for _, s in self.shapes(stream))

    def to_dict(self):
        return asdict(self)


def unpack(flat, layout, stream):
    """Named views into one stream's flat weights (no copies)."""
    out, i = {}, 0
    for name, shape in layout.shapes(stream):
        n = int(np.prod(shape))
        out[name] = flat[i : i + n].reshape(shape)
        i += n
    return out


@dataclass
class EncoderParams:
    layout: Layout
    audio_weights: np.ndarray
    visual_weights: np.ndarray

    def as_vector(self):
        return np.concatenate([self.audio_weights, self.visual_weights])

    @classmethod
    def from_vector(cls, layout, vec):
        vec = np.asarray(vec, dtype=np.float64)
        na = layout.size("audio")
        if vec.shape != (na + layout.size("visual"),):
            raise ShapeMismatch(f"parameter vector {vec.shape} does not fit layout {layout}")
        return cls(layout, vec[:na].copy(), vec[na:].copy())

    def copy(self):
        return EncoderParams(self.layout, self.audio_weights.copy(), self.visual_weights.copy())

    def audio(self):
        return unpack(self.audio_weights, self.layout, "audio")

    def visual(self):
        return unpack(self.visual_weights, self.layout, "visual")


def init_params(layout, seed):
    """Glorot-uniform weights and biases, both bounded by the layer's limit."""
    rng = CounterRNG.from_parts(seed, 0x1A17)
    parts = []
    for stream in ("audio", "visual"):
        flat = np.empty(layout.size(stream))
        views = unpack(flat, layout, stream)
        for layer in ("1", "2"):
            fan_out, fan_in = views["W" + layer].shape
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            views["W" + layer][...] = rng.uniform(views["W" + layer].shape, -lim, lim)
            views["b" + layer][...] = rng.uniform(views["b" + layer].shape, -lim, lim)
        parts.append(flat)
    return EncoderParams(layout, *parts)


def mlp_forward(x, w):
    h = np.tanh(x @ w["W1"].T + w["b1"])
    return h @ w["W2"].T + w["b2"], h


def mlp_backward(x, h, dy, w, grad):
    """Accumulate parameter gradients into the views in ``grad``."""
    xf = x.reshape(-1, x.shape[-1])
    hf = h.reshape(-1, h.shape[-1])
    dyf = dy.reshape(-1, dy.shape[-1])
    grad["W2"] += dyf.T @ hf
    grad["b2"] += dyf.sum(axis=0)
    dz = (dyf @ w["W2"]) * (1.0 - hf * hf)
    grad["W1"] += dz.T @ xf
    grad["b1"] += dz.sum(axis=0)


def audio_input(features):
    """Log-compressed, flattened band energies; works on (..., T, B)."""
    f = np.asarray(features, dtype=np.float64)
    return np.log1p(f).reshape(f.shape[:-2] + (-1,))


def audio_encoder(features, p):
    x = audio_input(features)
    if x.shape[-1] != p.layout.audio_in:
        raise ShapeMismatch(f"audio input size {x.shape[-1]} != {p.layout.audio_in}")
    return mlp_forward(x, p.audio())[0]


def visual_encoder(image, p):
    """Encode every cell of an ``(h, w, d)`` image; returns ``(c, h, w)``."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[-1] != p.layout.visual_in:
        raise ShapeMismatch(f"image {image.shape} does not match descriptor size {p.layout.visual_in}")
    y = mlp_forward(image, p.visual())[0]
    return np.moveaxis(y, -1, 0)
