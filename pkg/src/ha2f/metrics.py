"""Pixel confusion counts, the five change-detection scores, and error maps.

Counts are micro-accumulated: one confusion matrix over every pixel of a
corpus, scores computed once at the end.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from PIL import Image

from .errors import ContractError

ERROR_COLORS = {
    "tp": (255, 255, 255),
    "tn": (0, 0, 0),
    "fp": (255, 0, 0),
    "fn": (0, 255, 0),
}


class DegenerateScoreWarning(RuntimeWarning):
    pass


@dataclass
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def total(self):
        return self.tp + self.tn + self.fp + self.fn

    def __add__(self, other):
        return ConfusionCounts(self.tp + other.tp, self.tn + other.tn, self.fp + other.fp, self.fn + other.fn)

    def as_dict(self):
        return asdict(self)


def _as_binary(x, name):
    x = np.asarray(x)
    if x.dtype == bool:
        return x
    if not np.isin(x, (0, 1)).all():
        raise ContractError(f"{name} must be binary (0/1)")
    return x.astype(bool)


def _check_pair(pred, gt):
    pred, gt = _as_binary(pred, "pred"), _as_binary(gt, "gt")
    if pred.shape != gt.shape:
        raise ContractError(f"pred shape {pred.shape} does not match gt shape {gt.shape}")
    return pred, gt


def confusion(pred, gt):
    pred, gt = _check_pair(pred, gt)
    tp = int(np.count_nonzero(pred & gt))
    fp = int(np.count_nonzero(pred & ~gt))
    fn = int(np.count_nonzero(~pred & gt))
    return ConfusionCounts(tp, pred.size - tp - fp - fn, fp, fn)


def accumulate(pred, gt, counts=None):
    """Return ``counts`` plus the confusion of one (pred, gt) pair; change is positive."""
    c = confusion(pred, gt)
    return c if counts is None else counts + c


@dataclass
class Scores:
    precision: float
    recall: float
    oa: float
    f1: float
    iou: float
    degenerate: list[str] = field(default_factory=list)

    def as_tuple(self):
        return (self.precision, self.recall, self.oa, self.f1, self.iou)

    def short(self):
        return {"p": self.precision, "r": self.recall, "oa": self.oa, "f1": self.f1, "iou": self.iou}


def _ratio(num, den, name, flagged):
    if den == 0:
        flagged.append(name)
        return 0.0
    return num / den


def scores(counts):
    """Precision, recall, overall accuracy, F1 and IoU.

    A 0/0 score is reported as 0 and listed in ``Scores.degenerate`` (a
    :class:`DegenerateScoreWarning` is also emitted).
    """
    if counts.total <= 0:
        raise ContractError("cannot score empty confusion counts")
    tp, tn, fp, fn = counts.tp, counts.tn, counts.fp, counts.fn
    flagged = []
    p = _ratio(tp, tp + fp, "precision", flagged)
    r = _ratio(tp, tp + fn, "recall", flagged)
    oa = (tp + tn) / counts.total
    f1 = _ratio(2 * p * r, p + r, "f1", flagged)
    iou = _ratio(tp, tp + fp + fn, "iou", flagged)
    if flagged:
        warnings.warn(f"0/0 in {', '.join(flagged)}; reported as 0", DegenerateScoreWarning, stacklevel=2)
    return Scores(p, r, oa, f1, iou, flagged)


def report_dict(counts, s=None):
    s = s or scores(counts)
    return {
        "precision": s.precision,
        "recall": s.recall,
        "oa": s.oa,
        "f1": s.f1,
        "iou": s.iou,
        "counts": counts.as_dict(),
    }


def report_json(counts, s=None):
    return json.dumps(report_dict(counts, s), indent=2)


def report_text(counts, s=None):
    d = report_dict(counts, s)
    lines = [f"{k:<10}{d[k]:>10.4f}" for k in ("precision", "recall", "oa", "f1", "iou")]
    lines += [f"{k:<10}{v:>10d}" for k, v in d["counts"].items()]
    return "\n".join(lines)


def render_error_map(pred, gt):
    """uint8 RGB image: TP white, TN black, FP red, FN green."""
    pred, gt = _check_pair(pred, gt)
    out = np.zeros(pred.shape + (3,), dtype=np.uint8)
    out[pred & gt] = ERROR_COLORS["tp"]
    out[pred & ~gt] = ERROR_COLORS["fp"]
    out[~pred & gt] = ERROR_COLORS["fn"]
    return out


def save_error_map(pred, gt, path):
    Image.fromarray(render_error_map(pred, gt)).save(path)
