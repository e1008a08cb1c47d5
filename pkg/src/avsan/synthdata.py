"""Synthetic audio-visual scenes with ground-truth masks.

Scenes are ``h x w`` grids of cell descriptors. Each object is a rectangle
whose cells carry its class's visual signature plus jitter; background
cells carry low-amplitude texture. Each class also has an audio signature:
a band-energy profile realized as bin-centered sines, so a class's energy
lands in known bands of :func:`featurize`.
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import fileio
from .errors import ConfigError, PlacementFailure, TooShort, UnknownClass
from .rng import CounterRNG, derive_key

# fixed salts so class signatures do not depend on the dataset seed
_VISUAL_SALT = 0x5649535541
_SPLIT_CODES = {"train": 1, "calib": 2, "eval": 3}
SPLITS = ("train", "calib", "eval")


@dataclass(frozen=True)
class DataConfig:
    n_classes: int = 3
    n_train: int = 200
    n_calib: int = 64
    n_eval: int = 64
    seed: int = 0
    grid_h: int = 8
    grid_w: int = 8
    descriptor_dim: int = 8
    max_objects: int = 2
    blob_min: int = 2
    blob_max: int = 4
    visual_jitter: float = 0.15
    background_std: float = 0.15
    frame_len: int = 64
    n_frames: int = 16
    n_bands: int = 8
    audio_jitter: float = 0.05
    secondary_energy: float = 0.4
    max_signature_cosine: float = 0.5

    @property
    def wave_len(self):
        return self.frame_len * self.n_frames

    @property
    def classes(self):
        return [f"class{k}" for k in range(self.n_classes)]

    def validate(self):
        if self.n_classes < 2:
            raise ConfigError("need at least 2 classes so an offscreen class exists")
        if self.n_classes > self.n_bands:
            raise ConfigError(f"{self.n_classes} classes exceed {self.n_bands} bands")
        if self.n_classes > self.descriptor_dim:
            raise ConfigError("more classes than visual descriptor dimensions")
        if (self.frame_len // 2) % self.n_bands:
            raise ConfigError("frame_len/2 must be divisible by n_bands")
        if not 1 <= self.blob_min <= self.blob_max <= min(self.grid_h, self.grid_w):
            raise ConfigError("blob size range does not fit the grid")
        cos = signature_cosines(self)
        off = cos[~np.eye(len(cos), dtype=bool)]
        if off.size and off.max() >= self.max_signature_cosine:
            raise ConfigError(f"class audio signatures too similar (cos {off.max():.3f})")


@dataclass
class SceneImage:
    cells: np.ndarray  # (h, w, d)
    objects: list = field(default_factory=list)  # [(class_label, bool mask (h, w))]


@dataclass
class Sample:
    id: str
    split: str
    seed: int
    scene: SceneImage
    positives: list  # waveform per object, same order as scene.objects
    offscreen_class: str
    offscreen: np.ndarray
    noise: np.ndarray

    @property
    def class_labels(self):
        return [c for c, _ in self.scene.objects]

    @property
    def gt_masks(self):
        return [m for _, m in self.scene.objects]


@dataclass
class Dataset:
    config: DataConfig
    samples: list

    def split(self, name):
        return [s for s in self.samples if s.split == name]


# -- signatures -------------------------------------------------------------


def _class_index(label, cfg):
    try:
        return cfg.classes.index(label)
    except ValueError:
        raise UnknownClass(f"unknown class {label!r}") from None


def audio_signature(k, cfg):
    """Clean band-energy profile of class ``k``."""
    sig = np.zeros(cfg.n_bands)
    sig[k % cfg.n_bands] = 1.0
    sig[(k + 3) % cfg.n_bands] += cfg.secondary_energy
    return sig


def signature_cosines(cfg):
    s = np.array([audio_signature(k, cfg) for k in range(cfg.n_classes)])
    s = s / np.linalg.norm(s, axis=1, keepdims=True)
    return s @ s.T


def visual_signatures(cfg):
    """Orthonormal class descriptors, fixed per (n_classes, descriptor_dim)."""
    rng = CounterRNG.from_parts(_VISUAL_SALT, cfg.descriptor_dim)
    g = rng.normal((cfg.descriptor_dim, cfg.descriptor_dim))
    q, r = np.linalg.qr(g)
    q = q * np.sign(np.diag(r))
    return q[:, : cfg.n_classes].T.copy()


# -- audio ------------------------------------------------------------------


def band_of_bin(k, cfg):
    return (k - 1) // ((cfg.frame_len // 2) // cfg.n_bands)


def gen_audio(label, seed, cfg):
    k = _class_index(label, cfg)
    rng = CounterRNG.from_parts(seed, 0xA0D10)
    sig = audio_signature(k, cfg)
    per_band = (cfg.frame_len // 2) // cfg.n_bands
    t = np.arange(cfg.wave_len)
    gain = rng.uniform(None, 0.7, 1.3)
    w = np.zeros(cfg.wave_len)
    for b in np.flatnonzero(sig):
        energy = sig[b] * gain * (1.0 + 0.1 * rng.normal())
        bin_ = 1 + b * per_band + rng.integers(0, per_band)
        phase = rng.uniform(None, 0.0, 2 * np.pi)
        # sine of amplitude A has mean square A^2 / 2
        amp = np.sqrt(2.0 * max(energy, 0.0))
        w += amp * np.sin(2 * np.pi * bin_ * t / cfg.frame_len + phase)
    return w + cfg.audio_jitter * rng.normal(cfg.wave_len)


def gen_silence(length):
    return np.zeros(int(length))


def gen_noise(length, seed):
    if length < 1:
        raise TooShort("noise length must be >= 1")
    return CounterRNG(seed).normal(int(length))


def featurize(w, cfg=None, frame_len=64, n_bands=8):
    """Per-frame band energies (mean square of the band-limited signal).

    Frames are non-overlapping; band ``b`` covers DFT bins
    ``1 + b*m .. (b+1)*m`` with ``m = frame_len / (2 * n_bands)``, so DC is
    dropped and the bands tile the rest of the spectrum.
    """
    if cfg is not None:
        frame_len, n_bands = cfg.frame_len, cfg.n_bands
    w = np.asarray(w, dtype=np.float64)
    if w.shape[-1] < frame_len:
        raise TooShort(f"waveform of {w.shape[-1]} samples < frame of {frame_len}")
    n_frames = w.shape[-1] // frame_len
    frames = w[..., : n_frames * frame_len].reshape(w.shape[:-1] + (n_frames, frame_len))
    spec = np.fft.rfft(frames, axis=-1)
    power = spec.real**2 + spec.imag**2
    weight = np.full(frame_len // 2 + 1, 2.0)
    weight[0] = weight[-1] = 1.0
    power = power * weight / frame_len**2
    bins = power[..., 1:]
    return bins.reshape(bins.shape[:-1] + (n_bands, -1)).sum(axis=-1)


# -- scenes -----------------------------------------------------------------


def gen_scene(classes, h, w, seed, cfg, max_tries=200):
    """Place one rectangular blob per class at non-overlapping positions."""
    if not classes:
        raise ConfigError("scene needs at least one class")
    rng = CounterRNG.from_parts(seed, 0x5CE7E)
    vis = visual_signatures(cfg)
    cells = cfg.background_std * rng.normal((h, w, cfg.descriptor_dim))
    occupied = np.zeros((h, w), dtype=bool)
    objects = []
    for label in classes:
        k = _class_index(label, cfg)
        for _ in range(max_tries):
            bh = rng.integers(cfg.blob_min, min(cfg.blob_max, h) + 1)
            bw = rng.integers(cfg.blob_min, min(cfg.blob_max, w) + 1)
            y0 = rng.integers(0, h - bh + 1)
            x0 = rng.integers(0, w - bw + 1)
            m = np.zeros((h, w), dtype=bool)
            m[y0 : y0 + bh, x0 : x0 + bw] = True
            if not (m & occupied).any():
                break
        else:
            raise PlacementFailure(f"could not place {label} after {max_tries} tries")
        occupied |= m
        n = int(m.sum())
        cells[m] = vis[k] + cfg.visual_jitter * rng.normal((n, cfg.descriptor_dim))
        objects.append((label, m))
    return SceneImage(cells=cells, objects=objects)


def sample_seed(cfg, split, index):
    return derive_key(cfg.seed, _SPLIT_CODES[split], index)


def gen_sample(cfg, split, index):
    seed = sample_seed(cfg, split, index)
    rng = CounterRNG.from_parts(seed, 0x0B1EC7)
    n_obj = rng.integers(1, min(cfg.max_objects, cfg.n_classes - 1) + 1)
    order = rng.permutation(cfg.n_classes)
    present = [cfg.classes[i] for i in order[:n_obj]]
    absent = [cfg.classes[i] for i in sorted(order[n_obj:])]
    offscreen = rng.choice(absent)
    scene = gen_scene(present, cfg.grid_h, cfg.grid_w, seed, cfg)
    positives = [gen_audio(c, derive_key(seed, 1, j), cfg) for j, c in enumerate(present)]
    return Sample(
        id=f"{split}-{index:05d}",
        split=split,
        seed=seed,
        scene=scene,
        positives=positives,
        offscreen_class=offscreen,
        offscreen=gen_audio(offscreen, derive_key(seed, 2), cfg),
        noise=gen_noise(cfg.wave_len, derive_key(seed, 3)),
    )


def _split_sizes(cfg):
    return {"train": cfg.n_train, "calib": cfg.n_calib, "eval": cfg.n_eval}


def gen_dataset(cfg, workers=1):
    cfg.validate()
    jobs = [(s, i) for s, n in _split_sizes(cfg).items() for i in range(n)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            samples = list(ex.map(lambda j: gen_sample(cfg, *j), jobs))
    else:
        samples = [gen_sample(cfg, *j) for j in jobs]
    return Dataset(cfg, samples)


# -- disk -------------------------------------------------------------------


def _sample_files(s):
    base = f"tensors/{s.id}"
    files = {f"{base}/image.avst": s.scene.cells}
    for j, (w, m) in enumerate(zip(s.positives, s.gt_masks)):
        files[f"{base}/audio_{j}.avst"] = w
        files[f"{base}/gt_{j}.avst"] = m.astype(np.float64)
    files[f"{base}/offscreen.avst"] = s.offscreen
    files[f"{base}/noise.avst"] = s.noise
    return files


def manifest_entry(s):
    base = f"tensors/{s.id}"
    k = len(s.positives)
    return {
        "id": s.id,
        "split": s.split,
        "class_labels": s.class_labels,
        "image_path": f"{base}/image.avst",
        "audio_paths": {
            "positive": [f"{base}/audio_{j}.avst" for j in range(k)],
            "offscreen": f"{base}/offscreen.avst",
            "noise": f"{base}/noise.avst",
        },
        "offscreen_class": s.offscreen_class,
        "gt_paths": [f"{base}/gt_{j}.avst" for j in range(k)],
        "seed": s.seed,
    }


def write_dataset(ds, out, workers=1):
    """Write tensors, ``manifest.jsonl`` and ``dataset.json`` under ``out``."""
    out = Path(out)

    def write_one(s):
        for rel, t in _sample_files(s).items():
            p = out / rel
            p.parent.mkdir(parents=True, exist_ok=True)
            fileio.write_tensor(p, t)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            list(ex.map(write_one, ds.samples))
    else:
        for s in ds.samples:
            write_one(s)
    fileio.write_manifest(out / "manifest.jsonl", [manifest_entry(s) for s in ds.samples])
    fileio.dump_json({"config": asdict(ds.config), "format_version": 1}, out / "dataset.json")
    return out / "manifest.jsonl"


def load_config(data_dir):
    meta = json.loads((Path(data_dir) / "dataset.json").read_text())
    return DataConfig(**meta["config"])


def load_sample(entry, root):
    root = Path(root)
    rd = lambda p: fileio.read_tensor(root / p)
    masks = [rd(p) > 0.5 for p in entry["gt_paths"]]
    ap = entry["audio_paths"]
    return Sample(
        id=entry["id"],
        split=entry["split"],
        seed=entry["seed"],
        scene=SceneImage(rd(entry["image_path"]), list(zip(entry["class_labels"], masks))),
        positives=[rd(p) for p in ap["positive"]],
        offscreen_class=entry.get("offscreen_class"),
        offscreen=rd(ap["offscreen"]),
        noise=rd(ap["noise"]),
    )


def load_dataset(data_dir, manifest=None, splits=SPLITS):
    data_dir = Path(data_dir)
    manifest = Path(manifest) if manifest else data_dir / "manifest.jsonl"
    cfg = load_config(manifest.parent)
    entries = fileio.read_manifest(manifest)
    samples = [load_sample(e, manifest.parent) for e in entries if e["split"] in splits]
    return Dataset(cfg, samples)
