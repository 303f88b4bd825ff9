import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from helpers import random_mask
from ha2f.errors import ContractError
from ha2f.metrics import (ConfusionCounts, DegenerateScoreWarning, accumulate, render_error_map, report_dict,
                          report_text, save_error_map, scores)


def hand_pair():
    gt = np.zeros((4, 4), np.uint8)
    pred = np.zeros((4, 4), np.uint8)
    gt[0, 0:3] = pred[0, 0:3] = 1  # 3 overlap
    pred[2, 2] = 1  # extra prediction
    gt[3, 0] = 1  # missed
    return pred, gt


def test_all_positive_and_all_false_alarms():
    ones, zeros = np.ones((4, 4), np.uint8), np.zeros((4, 4), np.uint8)
    assert accumulate(ones, ones) == ConfusionCounts(tp=16)
    assert accumulate(ones, zeros) == ConfusionCounts(fp=16)


def test_hand_case_counts_and_scores():
    c = accumulate(*hand_pair())
    assert c == ConfusionCounts(tp=3, tn=11, fp=1, fn=1)
    s = scores(c)
    assert s.as_tuple() == pytest.approx((0.75, 0.75, 0.875, 0.75, 0.6), abs=1e-12)
    assert not s.degenerate


def test_perfect_prediction():
    s = scores(ConfusionCounts(tp=5, tn=7))
    assert s.as_tuple() == (1.0, 1.0, 1.0, 1.0, 1.0)


def test_degenerate_precision_flagged():
    with pytest.warns(DegenerateScoreWarning):
        s = scores(ConfusionCounts(tp=0, fp=0, fn=4, tn=2))
    assert s.precision == 0 and s.recall == 0 and s.iou == 0
    assert "precision" in s.degenerate


def test_empty_counts_rejected():
    with pytest.raises(ContractError):
        scores(ConfusionCounts())


def test_contract_errors():
    with pytest.raises(ContractError):
        accumulate(np.zeros((4, 4)), np.zeros((4, 5)))
    with pytest.raises(ContractError):
        accumulate(np.full((4, 4), 2), np.zeros((4, 4)))
    with pytest.raises(ContractError):
        render_error_map(np.zeros((2, 2)), np.zeros((3, 3)))


def brute_force_scores(preds, gts):
    tp = tn = fp = fn = 0
    for p, g in zip(preds, gts):
        for a, b in zip(p.ravel().tolist(), g.ravel().tolist()):
            if a and b:
                tp += 1
            elif a:
                fp += 1
            elif b:
                fn += 1
            else:
                tn += 1
    P = tp / (tp + fp) if tp + fp else 0.0
    R = tp / (tp + fn) if tp + fn else 0.0
    return (P, R, (tp + tn) / (tp + tn + fp + fn), 2 * P * R / (P + R) if P + R else 0.0,
            tp / (tp + fp + fn) if tp + fp + fn else 0.0)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 6), p=st.floats(0.05, 0.95))
def test_micro_scores_match_brute_force_and_identities(seed, n, p):
    rng = np.random.default_rng(seed)
    preds = [random_mask(rng, (5, 6), p) for _ in range(n)]
    gts = [random_mask(rng, (5, 6), p) for _ in range(n)]
    counts = ConfusionCounts()
    for a, b in zip(preds, gts):
        counts = accumulate(a, b, counts)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateScoreWarning)
        s = scores(counts)
    assert s.as_tuple() == pytest.approx(brute_force_scores(preds, gts), abs=1e-12)
    assert s.f1 == pytest.approx(2 * s.iou / (1 + s.iou), abs=1e-12)
    assert all(0 <= v <= 1 for v in s.as_tuple())
    # order independence and associative merging
    perm = rng.permutation(n)
    shuffled = ConfusionCounts()
    for i in perm:
        shuffled = accumulate(preds[i], gts[i], shuffled)
    assert shuffled == counts
    halves = sum((accumulate(preds[i], gts[i]) for i in perm[1:]), accumulate(preds[perm[0]], gts[perm[0]]))
    assert halves == counts


def test_error_map_colors():
    pred = np.array([[1, 0], [1, 0]])
    gt = np.array([[1, 0], [0, 1]])
    img = render_error_map(pred, gt)
    assert img.dtype == np.uint8
    assert tuple(img[0, 0]) == (255, 255, 255)
    assert tuple(img[0, 1]) == (0, 0, 0)
    assert tuple(img[1, 0]) == (255, 0, 0)
    assert tuple(img[1, 1]) == (0, 255, 0)


def test_error_map_only_black_white_when_correct_and_only_red_green_when_inverted():
    rng = np.random.default_rng(0)
    gt = random_mask(rng, (8, 8))
    colors = {tuple(c) for c in render_error_map(gt, gt).reshape(-1, 3)}
    assert colors <= {(0, 0, 0), (255, 255, 255)}
    colors = {tuple(c) for c in render_error_map(1 - gt, gt).reshape(-1, 3)}
    assert colors <= {(255, 0, 0), (0, 255, 0)}


def test_error_map_matches_lookup_table(tmp_path):
    rng = np.random.default_rng(1)
    pred, gt = random_mask(rng, (6, 7)), random_mask(rng, (6, 7))
    table = {(1, 1): (255, 255, 255), (0, 0): (0, 0, 0), (1, 0): (255, 0, 0), (0, 1): (0, 255, 0)}
    img = render_error_map(pred, gt)
    for (i, j), v in np.ndenumerate(pred):
        assert tuple(img[i, j]) == table[(v, gt[i, j])]
    save_error_map(pred, gt, tmp_path / "e.png")
    with Image.open(tmp_path / "e.png") as im:
        assert im.mode == "RGB"
        np.testing.assert_array_equal(np.asarray(im), img)


def test_report_formats():
    c = ConfusionCounts(tp=3, tn=11, fp=1, fn=1)
    d = report_dict(c)
    assert set(d) == {"precision", "recall", "oa", "f1", "iou", "counts"}
    assert json.loads(json.dumps(d))["counts"] == {"tp": 3, "tn": 11, "fp": 1, "fn": 1}
    assert "0.8750" in report_text(c)
