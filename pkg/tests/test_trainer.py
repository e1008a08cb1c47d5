import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import gradcheck
from avsan.core import cosine_similarity_map, max_pool
from avsan.errors import BadTransform, BatchTooSmall, ConfigError, LengthMismatch, ShapeMismatch, TooFewSamples
from avsan.rng import CounterRNG
from avsan.synthdata import DataConfig, gen_dataset
from avsan.trainer import (
    EncoderParams,
    GeoTransform,
    Layout,
    TrainConfig,
    alpha_schedule,
    apply_geo_transform,
    audio_encoder,
    backward,
    contrastive_loss,
    feature_masking,
    find_similar_audio,
    geo_equivariance_loss,
    init_params,
    mask_features,
    noise_loss,
    objective,
    sam_mix,
    silence_embedding,
    silence_loss,
    total_loss,
    train,
    visual_encoder,
)
from avsan.trainer.augment import gather_cells
from avsan.trainer.losses import loss_weights
from oracles import bf_contrastive, central_difference, rel_error

LAY = Layout(audio_in=12, visual_in=5, hidden=6, c=5)


def zero_params(layout, audio_bias, visual_bias):
    p = EncoderParams(layout, np.zeros(layout.size("audio")), np.zeros(layout.size("visual")))
    p.audio()["b2"][...] = audio_bias
    p.visual()["b2"][...] = visual_bias
    return p


# -- encoders ------------------------------------------------------------------


def test_zero_weights_give_bias(rng):
    b_a, b_v = rng.normal(size=5), rng.normal(size=5)
    p = zero_params(LAY, b_a, b_v)
    np.testing.assert_array_equal(audio_encoder(rng.uniform(size=(4, 3)), p), b_a)
    v = visual_encoder(rng.normal(size=(2, 3, 5)), p)
    np.testing.assert_array_equal(v, np.broadcast_to(b_v[:, None, None], (5, 2, 3)))


def test_encoders_are_deterministic(rng):
    f = rng.uniform(size=(4, 3))
    a1 = audio_encoder(f, init_params(LAY, 3))
    a2 = audio_encoder(f, init_params(LAY, 3))
    assert a1.tobytes() == a2.tobytes()
    with pytest.raises(ShapeMismatch):
        audio_encoder(np.ones((5, 3)), init_params(LAY, 3))
    with pytest.raises(ShapeMismatch):
        visual_encoder(np.ones((2, 2, 4)), init_params(LAY, 3))


@pytest.mark.parametrize("stream", ["audio", "visual"])
def test_encoder_jvp_matches_finite_differences(stream, rng):
    p = init_params(LAY, 9)
    x = rng.uniform(size=(4, 3)) if stream == "audio" else rng.normal(size=(2, 2, 5))
    enc = audio_encoder if stream == "audio" else visual_encoder
    dx = rng.normal(size=x.shape)
    h = 1e-5
    fd = (enc(x + h * dx, p) - enc(x - h * dx, p)) / (2 * h)
    # analytic JVP through tanh layer
    w = p.audio() if stream == "audio" else p.visual()
    if stream == "audio":
        xi, dxi = np.log1p(x).ravel(), (dx / (1 + x)).ravel()
    else:
        xi, dxi = x, dx
    z = xi @ w["W1"].T + w["b1"]
    jvp = ((1 - np.tanh(z) ** 2) * (dxi @ w["W1"].T)) @ w["W2"].T
    if stream == "visual":
        jvp = np.moveaxis(jvp, -1, 0)
    assert rel_error(jvp, fd) < 1e-6


def test_init_within_glorot_bounds():
    p = init_params(LAY, 0)
    for w in (p.audio(), p.visual()):
        for layer in ("1", "2"):
            fo, fi = w["W" + layer].shape
            lim = math.sqrt(6 / (fi + fo))
            assert np.abs(w["W" + layer]).max() <= lim
            assert np.abs(w["b" + layer]).max() <= lim


# -- gradients -----------------------------------------------------------------


@pytest.mark.parametrize("term", list(gradcheck.TERMS))
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gradient_matches_central_differences(term, seed):
    params, batch = gradcheck.problem(seed)
    assert gradcheck.check(params, batch, gradcheck.TERMS[term]) < 1e-6


def test_mlp_gradient_with_generic_fd(rng):
    # same check through the oracle helper, on the noise term alone
    params, batch = gradcheck.problem(7)
    f = lambda x: objective(EncoderParams.from_vector(params.layout, x), batch, 0.07, (0, 0, 1, 0), grad=False)[0].total
    g = objective(params, batch, 0.07, (0, 0, 1, 0))[1]
    assert rel_error(g, central_difference(f, params.as_vector())) < 1e-6


# -- batched objective vs per-item references ----------------------------------


def test_objective_matches_per_item_forms():
    params, batch = gradcheck.problem(3)
    parts, _ = objective(params, batch, 0.07, (1, 1, 1, 1), grad=False)
    a = [audio_encoder(f, params) for f in batch.audio]
    v = [visual_encoder(img, params) for img in batch.images]
    assert parts.contrastive == pytest.approx(contrastive_loss(a, v, 0.07), abs=1e-12)
    logits = [[max_pool(cosine_similarity_map(ai, vj)) / 0.07 for vj in v] for ai in a]
    assert parts.contrastive == pytest.approx(bf_contrastive(logits), abs=1e-12)
    assert parts.l_s == pytest.approx(np.mean([silence_loss(vj, params) for vj in v]), abs=1e-12)
    assert parts.l_n == pytest.approx(np.mean([noise_loss(vj, nz, params) for vj, nz in zip(v, batch.noise)]), abs=1e-12)
    geo = [geo_equivariance_loss(ai, vj, t, params, img)
           for ai, vj, t, img in zip(a, v, batch.transforms, batch.images)]
    assert parts.l_geo == pytest.approx(np.mean(geo), abs=1e-12)


def test_contrastive_examples(rng):
    c = 3
    e = np.eye(c)
    maps = [np.broadcast_to(e[j][:, None, None], (c, 2, 2)) for j in range(2)]
    assert contrastive_loss([e[0], e[1]], maps, 0.01) < 1e-40
    same = [np.ones((c, 2, 2))] * 4
    assert contrastive_loss([np.ones(c)] * 4, same, 0.07) == pytest.approx(math.log(4), abs=1e-12)
    with pytest.raises(BatchTooSmall):
        contrastive_loss([np.ones(c)], same[:1])


def test_silence_loss_examples():
    lay = Layout(audio_in=4, visual_in=2, hidden=3, c=3)
    p = zero_params(lay, np.array([1.0, 0.0, 0.0]), np.zeros(3))
    np.testing.assert_array_equal(silence_embedding(p), [1.0, 0.0, 0.0])
    v = np.zeros((3, 4, 4))
    v[1] = 1.0
    assert silence_loss(v, p) == 0.0
    for y, x in [(0, 0), (1, 2), (3, 3), (2, 1)]:
        v[:, y, x] = [0.5, math.sqrt(0.75), 0.0]
    assert silence_loss(v, p) == pytest.approx(1.0, abs=1e-12)


def test_noise_loss_seeds_differ():
    p = init_params(LAY, 1)
    v = visual_encoder(np.random.default_rng(0).normal(size=(3, 3, 5)), p)
    n1 = np.abs(CounterRNG(1).normal((4, 3)))
    n2 = np.abs(CounterRNG(2).normal((4, 3)))
    l1, l2 = noise_loss(v, n1, p), noise_loss(v, n2, p)
    assert np.isfinite([l1, l2]).all() and l1 != l2 and min(l1, l2) >= 0


def test_loss_identities():
    params, batch = gradcheck.problem(4)
    cfg = TrainConfig(lambda_sn=0.0, lambda_geo=0.0)
    parts = total_loss(batch, params, cfg)
    assert parts.total == parts.contrastive
    cfg = TrainConfig(lambda_sn=0.3, lambda_geo=2.0)
    parts = total_loss(batch, params, cfg)
    want = parts.contrastive + 0.3 * (parts.l_s + parts.l_n) + 2.0 * parts.l_geo
    assert abs(parts.total - want) <= 1e-12
    assert loss_weights(TrainConfig(geo_enabled=False))[3] == 0.0
    g = backward(batch, params, cfg)
    assert g.shape == params.as_vector().shape


# -- geometric transforms ------------------------------------------------------


def test_geo_examples():
    x = np.arange(16.0).reshape(4, 4)
    t = GeoTransform("hflip")
    np.testing.assert_array_equal(apply_geo_transform(x, GeoTransform()), x)
    np.testing.assert_array_equal(apply_geo_transform(apply_geo_transform(x, t), t), x)
    hot = np.zeros((4, 4))
    hot[0, 0] = 1
    assert apply_geo_transform(hot, t)[0, 3] == 1
    np.testing.assert_array_equal(apply_geo_transform(x, GeoTransform("rot90", k=1)), np.rot90(x))
    sh = apply_geo_transform(x, GeoTransform("translate", dy=1, dx=-2))
    assert sh[0].sum() == 0 and sh[:, 2:].sum() == 0
    np.testing.assert_array_equal(sh[1:, :2], x[:3, 2:])
    with pytest.raises(BadTransform):
        GeoTransform("shear").source_index(4, 4)
    with pytest.raises(BadTransform):
        GeoTransform("rot90", k=1).source_index(3, 4)
    with pytest.raises(BadTransform):
        GeoTransform("translate", dy=4).source_index(4, 4)


def test_image_and_map_transform_consistently(rng):
    img = rng.normal(size=(4, 4, 3))
    for t in [GeoTransform("hflip"), GeoTransform("rot90", k=3), GeoTransform("translate", dy=-1, dx=2)]:
        out = apply_geo_transform(img, t)
        for ch in range(3):
            np.testing.assert_array_equal(out[..., ch], apply_geo_transform(img[..., ch], t))


def test_equivariance_exact_for_permutations(rng):
    p = init_params(Layout(audio_in=12, visual_in=5), 2)
    img = rng.normal(size=(6, 6, 5))
    a = audio_encoder(rng.uniform(size=(4, 3)), p)
    v = visual_encoder(img, p)
    assert geo_equivariance_loss(a, v, GeoTransform(), p, img) == 0.0
    for t in [GeoTransform("hflip"), GeoTransform("rot90", k=2)]:
        assert geo_equivariance_loss(a, v, t, p, img) <= 1e-9


def test_gather_zero_fill():
    flat = np.arange(6.0).reshape(3, 2)
    np.testing.assert_array_equal(gather_cells(flat, np.array([2, -1, 0])), [[4, 5], [0, 0], [0, 1]])


# -- masking, similar audio, mixing --------------------------------------------


def test_masking_examples(rng):
    f = rng.uniform(0.1, 1, size=(16, 8))
    np.testing.assert_array_equal(mask_features(f, 3, 0, 2, 0), f)
    assert not mask_features(f, 0, 16, 0, 8).any()
    out = feature_masking(f, CounterRNG(4), max_time=4, max_bands=1)
    assert out.shape == f.shape


@given(st.integers(0, 16), st.integers(0, 8), st.data())
def test_masking_popcount(t_span, b_span, data):
    t0 = data.draw(st.integers(0, 16 - t_span))
    b0 = data.draw(st.integers(0, 8 - b_span))
    out = mask_features(np.ones((16, 8)), t0, t_span, b0, b_span)
    assert (out == 0).sum() == t_span * 8 + b_span * 16 - t_span * b_span


def test_find_similar_audio(rng):
    np.testing.assert_array_equal(find_similar_audio(rng.normal(size=(2, 3))), [1, 0])
    e = np.eye(5)
    e[4] = e[1]
    sim = find_similar_audio(e)
    assert sim[1] == 4 and sim[4] == 1
    for _ in range(20):
        x = rng.normal(size=(6, 4))
        want = []
        for i in range(6):
            best, arg = -2.0, None
            for j in range(6):
                if j == i:
                    continue
                c = x[i] @ x[j] / (np.linalg.norm(x[i]) * np.linalg.norm(x[j]))
                if c > best:
                    best, arg = c, j
            want.append(arg)
        assert find_similar_audio(x).tolist() == want
    with pytest.raises(TooFewSamples):
        find_similar_audio(np.ones((1, 3)))


def test_sam_mix_examples(rng):
    w = rng.normal(size=10)
    np.testing.assert_array_equal(sam_mix(w, rng.normal(size=10), 0.0), w)
    np.testing.assert_array_equal(sam_mix([1.0, 0.0], [0.0, 1.0], 0.5), [0.5, 0.5])
    np.testing.assert_allclose(sam_mix(w, w, 0.5), w, atol=1e-15)
    with pytest.raises(LengthMismatch):
        sam_mix(w, w[:5], 0.2)


@given(arrays(np.float64, 32, elements=st.floats(-5, 5)), arrays(np.float64, 32, elements=st.floats(-5, 5)),
       st.floats(0, 0.5), st.floats(0, 0.5))
def test_sam_mix_linear_in_alpha(w, v, a1, a2):
    mid = sam_mix(w, v, (a1 + a2) / 2)
    np.testing.assert_allclose(mid, (sam_mix(w, v, a1) + sam_mix(w, v, a2)) / 2, atol=1e-12)
    assert mid.shape == w.shape


def test_alpha_schedule_examples():
    assert alpha_schedule(0) == 0.0
    assert alpha_schedule(50) == 0.5
    assert alpha_schedule(100) == 0.5
    assert alpha_schedule(25) == 0.25


@given(st.integers(0, 200), st.integers(0, 200), st.floats(0, 1), st.integers(1, 100))
def test_alpha_schedule_monotone_bounded(e1, e2, amax, ramp):
    lo, hi = sorted((e1, e2))
    assert alpha_schedule(lo, amax, ramp) <= alpha_schedule(hi, amax, ramp) <= amax


# -- loop ----------------------------------------------------------------------

SMALL = DataConfig(n_train=24, n_calib=4, n_eval=4, seed=5)


def test_zero_epochs_returns_init():
    ds = gen_dataset(SMALL)
    cfg = TrainConfig(epochs=0, seed=3)
    p, hist = train(cfg, ds)
    assert hist == []
    ref = init_params(Layout(SMALL.n_frames * SMALL.n_bands, SMALL.descriptor_dim, cfg.hidden, cfg.c), 3)
    assert p.as_vector().tobytes() == ref.as_vector().tobytes()


def test_training_is_deterministic_and_decreases_loss():
    ds = gen_dataset(SMALL)
    cfg = TrainConfig(epochs=4, batch_size=8, alpha_ramp_epochs=2)
    p1, h1 = train(cfg, ds)
    p2, h2 = train(cfg, ds)
    assert p1.as_vector().tobytes() == p2.as_vector().tobytes()
    assert h1 == h2
    assert h1[-1]["loss"]["total"] < h1[0]["loss"]["total"]
    for rec in h1:
        l = rec["loss"]
        assert abs(l["total"] - (l["contrastive"] + l["l_s"] + l["l_n"] + l["l_geo"])) < 1e-9


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"lambda_sm": 1})
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=1).validate()
    with pytest.raises(ConfigError):
        TrainConfig(lambda_sn=-1).validate()
    assert TrainConfig.from_dict(TrainConfig().to_dict()) == TrainConfig()
