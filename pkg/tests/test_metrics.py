import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from avsan.core import PooledPair
from avsan.errors import EmptyInput, ShapeMismatch, TooFewSamples
from avsan.metrics import (
    EvalRecord,
    GroundTruthRegion,
    alignment,
    auc,
    auc_n,
    evaluate,
    f_auc,
    f_loc,
    harmonic_mean,
    iou,
    magnitude,
    pia,
    separability,
    success_rate,
)
from avsan.thresholding import binarize_adaptive
from oracles import bf_auc, bf_auc_n, bf_evaluate, bf_iou, bf_separability

unit = st.floats(0, 1, allow_nan=False)
pct = st.floats(0, 100, allow_nan=False)


def box(h, w, y0, x0, hh, ww):
    m = np.zeros((h, w), dtype=bool)
    m[y0 : y0 + hh, x0 : x0 + ww] = True
    return m


# -- examples ------------------------------------------------------------------


def test_iou_examples():
    g = GroundTruthRegion(box(4, 4, 0, 0, 2, 2))
    assert iou(g.mask, g) == 1.0
    assert iou(box(4, 4, 2, 2, 2, 2), g) == 0.0
    assert iou(box(4, 4, 0, 1, 2, 2), g) == pytest.approx(2 / 6, abs=1e-15)
    assert iou(np.zeros((4, 4), bool), g) == 0.0
    with pytest.raises(ShapeMismatch):
        iou(np.zeros((3, 4), bool), g)


def test_success_rate_examples():
    assert success_rate([0.6, 0.4, 0.7], 0.5) == pytest.approx(200 / 3)
    assert success_rate([1.0, 1.0], 0.5) == 100.0
    assert success_rate([0.2, 0.99], 1.0) == 0.0
    with pytest.raises(EmptyInput):
        success_rate([], 0.5)


def test_auc_examples():
    assert auc([0.0, 0.0]) == 0.0
    assert auc([1.0]) == pytest.approx(97.5, abs=1e-12)
    assert auc([1.0, 0.0]) == pytest.approx(48.75, abs=1e-12)


def test_pia_and_auc_n_examples():
    assert pia(np.zeros((10, 10))) == 0.0
    m = np.zeros((10, 10), bool)
    m.flat[:5] = True
    assert pia(m) == 5.0
    assert pia(np.ones((3, 3), bool)) == 100.0
    assert auc_n([0.0, 0.0]) == pytest.approx(100.0, abs=1e-12)
    assert auc_n([100.0]) == pytest.approx(2.5, abs=1e-12)
    assert auc_n([0.0, 100.0]) == pytest.approx(51.25, abs=1e-12)


def test_f_scores_on_published_rows():
    assert f_loc(29.61, {"silence": 0.01, "noise": 0.00, "offscreen": 1.72}) == pytest.approx(45.63, abs=0.01)
    assert f_loc(27.78, [0.78, 0.68, 2.50]) == pytest.approx(43.36, abs=0.01)
    assert f_auc(29.97, [99.99, 100.00, 98.17]) == pytest.approx(46.05, abs=0.01)
    assert f_auc(28.23, [99.16, 99.26, 97.39]) == pytest.approx(43.90, abs=0.01)


def test_f_scores_on_further_rows():
    assert f_loc(19.13, [0.00, 0.00, 2.09]) == pytest.approx(32.08, abs=0.01)
    assert f_auc(19.94, [100.00, 100.00, 97.73]) == pytest.approx(33.21, abs=0.01)
    # weight-ablation row with the silence/noise term switched off
    assert f_loc(20.18, [0.03, 0.00, 1.95]) == pytest.approx(33.55, abs=0.01)


def test_f_score_edges():
    assert f_loc(0.0, [10, 20, 30]) == 0.0
    assert f_auc(100.0, [100, 100, 100]) == 100.0
    assert harmonic_mean(0.0, 0.0) == 0.0


def test_separability_examples():
    assert separability([0.5, 0.6, 0.7, 0.8], [0.1, 0.2, 0.3, 0.4]) == pytest.approx(0.25, abs=1e-15)
    xs = [0.3, -0.1, 0.7, 0.2, 0.5]
    assert separability(xs, xs) <= 0
    assert separability([1.0] * 4, [-1.0] * 4) == 2.0
    with pytest.raises(TooFewSamples):
        separability([1, 2, 3], [1, 2, 3, 4])


def test_alignment_magnitude_examples():
    same = [PooledPair(np.array([1.0, 2.0]), np.array([1.0, 2.0]))] * 3
    assert alignment(same) == pytest.approx(1.0)
    assert magnitude(same) == 0.0
    orth = [PooledPair(np.array([1.0, 0.0]), np.array([0.0, 1.0]))]
    assert alignment(orth) == 0.0
    assert magnitude(orth) == pytest.approx(math.sqrt(2))
    mixed = [same[0], PooledPair(np.array([1.0, 0.0]), np.array([0.0, 3.0]))]
    assert alignment(mixed) == pytest.approx(0.5)
    with pytest.raises(EmptyInput):
        alignment([])


def test_bbox_rasterization():
    g = GroundTruthRegion.from_bbox((1, 0, 2, 1), 4, 4)
    np.testing.assert_array_equal(g.mask, box(4, 4, 0, 1, 2, 2))
    assert g.area == 4


def _record(i, pos, gt, neg, a, v):
    return EvalRecord(f"r{i}", "c", pos, neg, GroundTruthRegion(gt), PooledPair(a, v))


def test_evaluate_perfect_record():
    gt = box(3, 3, 0, 0, 1, 2)
    pos = np.where(gt, 0.9, 0.1)
    neg = {c: np.full((3, 3), 0.2) for c in ("silence", "noise", "offscreen")}
    rep = evaluate([_record(0, pos, gt, neg, np.ones(2), np.ones(2))], 0.5)
    assert rep.ciou_uth == 100.0 and rep.f_loc == 100.0
    assert all(v == 0.0 for v in rep.pia.values())
    assert rep.separability is None


def test_evaluate_matches_naive_evaluator(rng):
    for _ in range(20):
        recs, raw = [], []
        for i in range(int(rng.integers(1, 9))):
            gt = box(4, 5, *rng.integers(0, 3, 2), *rng.integers(1, 3, 2))
            pos = np.round(rng.uniform(-1, 1, (4, 5)) * 8) / 8
            neg = {c: np.round(rng.uniform(-1, 1, (4, 5)) * 8) / 8 for c in ("silence", "noise", "offscreen")}
            a, v = rng.normal(size=3), rng.normal(size=3)
            recs.append(_record(i, pos, gt, neg, a, v))
            raw.append({"pos": pos.tolist(), "gt": gt.tolist(), "neg": {k: m.tolist() for k, m in neg.items()},
                        "audio": a.tolist(), "visual": v.tolist()})
        theta = float(np.round(rng.uniform(-0.5, 0.8) * 8) / 8)
        got = evaluate(recs, theta).to_dict()
        want = bf_evaluate(raw, theta)
        for k, w in want.items():
            if isinstance(w, dict):
                for c in w:
                    assert got[k][c] == pytest.approx(w[c], abs=1e-9)
            elif w is None:
                assert got[k] is None
            else:
                assert got[k] == pytest.approx(w, abs=1e-9), k


# -- properties ----------------------------------------------------------------


@given(st.lists(unit, min_size=1, max_size=20), st.data())
def test_auc_monotone_in_each_iou(ious, data):
    i = data.draw(st.integers(0, len(ious) - 1))
    raised = list(ious)
    raised[i] = data.draw(st.floats(ious[i], 1))
    assert auc(raised) >= auc(ious) - 1e-12
    assert auc(ious) == pytest.approx(bf_auc(ious), abs=1e-9)


@given(st.lists(pct, min_size=1, max_size=20), st.data())
def test_auc_n_antitone_in_each_pia(pias, data):
    i = data.draw(st.integers(0, len(pias) - 1))
    raised = list(pias)
    raised[i] = data.draw(st.floats(pias[i], 100))
    assert auc_n(raised) <= auc_n(pias) + 1e-12
    assert auc_n(pias) == pytest.approx(bf_auc_n(pias), abs=1e-9)


@given(arrays(bool, (4, 4)), arrays(bool, (4, 4)))
def test_iou_symmetric_and_bounded(m, g):
    g = g.copy()
    g[0, 0] = True
    m = m.copy()
    m[3, 3] = True
    v = iou(m, GroundTruthRegion(g))
    assert 0.0 <= v <= 1.0
    assert v == iou(g, GroundTruthRegion(m))
    assert v == bf_iou(m.tolist(), g.tolist())


@given(st.lists(unit, min_size=4, max_size=12), st.lists(unit, min_size=4, max_size=12), st.floats(1e-3, 1))
def test_separability_strictly_monotone(pos, neg, d):
    s = separability(pos, neg)
    assert s == pytest.approx(bf_separability(pos, neg), abs=1e-12)
    assert separability(np.add(pos, d), neg) > s
    assert separability(pos, np.add(neg, d)) < s


@given(pct, pct, pct, pct)
def test_f_loc_is_harmonic_mean(c, a, b, d):
    v = f_loc(c, [a, b, d])
    assert v == pytest.approx(harmonic_mean(c, 100 - (a + b + d) / 3), abs=1e-9)
    assert 0 <= v <= 100 + 1e-9


@given(st.integers(1, 3), st.integers(1, 3), st.integers(0, 2), st.integers(0, 2))
def test_adaptive_mask_tiles_gt(hh, ww, y0, x0):
    gt = box(5, 5, y0, x0, hh, ww)
    s = np.where(gt, 0.8, -0.2)
    assert iou(binarize_adaptive(s, int(gt.sum())), GroundTruthRegion(gt)) == 1.0
