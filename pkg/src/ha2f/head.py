"""Decoder cascade, change classifier and training loss."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ContractError
from .nafrm import NAFRM, upsample2


class ChangeDecoder(nn.Module):
    """Fold the difference pyramid from 1/16 up to 1/2, then predict at full size.

    The running state always enters NAFRM as the low-resolution input.
    """

    def __init__(self, cfg, sat=True, dfsm=True):
        super().__init__()
        c1, c2, c3, _ = cfg.cnn_channels
        fc = cfg.fused_channels
        self.stages = nn.ModuleDict({
            "8": NAFRM(fc, c3, sat, dfsm),
            "4": NAFRM(c3, c2, sat, dfsm),
            "2": NAFRM(c2, c1, sat, dfsm),
        })
        self.head3 = nn.Conv2d(c1, c1, 3, padding=1)
        self.head1 = nn.Conv2d(c1, 1, 1)

    def forward(self, diffs):
        x = diffs[16].data
        for s in (8, 4, 2):
            x = self.stages[str(s)](x, diffs[s].data)
        x = F.relu(self.head3(upsample2(x)))
        return self.head1(x)[:, 0]


def decode(diffs, module):
    return module(diffs)


def _check_label(label):
    vals = torch.unique(label)
    if not bool(((vals == 0) | (vals == 1)).all()):
        raise ContractError(f"label must be binary, found values {vals[:8].tolist()}")


def loss(logits, label, weights=(1.0, 1.0), smooth=1.0):
    """Weighted BCE-with-logits plus soft-Dice loss (``1 - dice``)."""
    if logits.shape != label.shape:
        raise ContractError(f"logits {tuple(logits.shape)} and label {tuple(label.shape)} differ in shape")
    label = label.to(logits.dtype)
    _check_label(label)
    w_bce, w_dice = weights
    bce = F.binary_cross_entropy_with_logits(logits, label)
    p = torch.sigmoid(logits)
    dice = (2 * (p * label).sum() + smooth) / (p.sum() + label.sum() + smooth)
    return w_bce * bce + w_dice * (1 - dice)


@dataclass
class ChangeMap:
    prob: np.ndarray
    mask: np.ndarray
    threshold: float = 0.5


def classify(logits, threshold=0.5):
    """Sigmoid probabilities and the inclusive ``prob >= threshold`` mask."""
    if isinstance(logits, torch.Tensor):
        prob = torch.sigmoid(logits.detach()).cpu().numpy()
    else:
        logits = np.asarray(logits, dtype=np.float64)
        prob = 0.5 * (1 + np.tanh(0.5 * logits))
    return ChangeMap(prob, (prob >= threshold).astype(np.uint8), threshold)
