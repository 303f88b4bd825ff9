"""Dynamic hierarchical feature calibration.

Three cross-attention layers pull 1/2, 1/4 and 1/8 detail into the fused
1/16 map, a 1x1 depthwise-separable projection merges them, and HAFS
refines each phase against the other.
"""
import math

import torch
import torch.nn as nn

from .errors import ContractError, NumericError, ShapeError
from .features import DifferencePyramid, FeatureMap, FeaturePyramid


def _require_finite(*tensors):
    for t in tensors:
        if not torch.isfinite(t).all():
            raise NumericError("cross-attention input contains non-finite values")


class CrossAttention(nn.Module):
    """Single-head attention: queries from the 1/16 map, keys/values from a finer level."""

    def __init__(self, query_channels, kv_channels, dim):
        super().__init__()
        self.dim = dim
        self.q = nn.Linear(query_channels, dim)
        self.k = nn.Linear(kv_channels, dim)
        self.v = nn.Linear(kv_channels, dim)
        self.out = nn.Linear(dim, query_channels)

    def forward(self, high, low, return_attn=False):
        B, C, h, w = high.shape
        if low.shape[0] != B:
            raise ShapeError(f"batch mismatch: high {B}, low {low.shape[0]}")
        q = self.q(high.flatten(2).transpose(1, 2))
        kv = low.flatten(2).transpose(1, 2)
        k, v = self.k(kv), self.v(kv)
        attn = torch.softmax(q @ k.transpose(1, 2) / math.sqrt(self.dim), dim=-1)
        out = self.out(attn @ v).transpose(1, 2).reshape(B, C, h, w)
        return (out, attn) if return_attn else out


def cross_attend(high, low, module, return_attn=False):
    """Tagged wrapper around :class:`CrossAttention` with the phase/scale checks."""
    if high.phase != low.phase:
        raise ContractError(f"cross_attend phase mismatch: high={high.phase}, low={low.phase}")
    if high.scale != 16 or low.scale not in (2, 4, 8):
        raise ContractError(f"cross_attend expects high at 1/16 and low at 1/2..1/8, got {high.scale}, {low.scale}")
    _require_finite(high.data, low.data)
    res = module(high.data, low.data, return_attn=return_attn)
    if return_attn:
        return FeatureMap(res[0], 16, high.phase), res[1]
    return FeatureMap(res, 16, high.phase)


class LevelMerge(nn.Module):
    """Concatenate three maps and project with a 1x1 depthwise-separable conv."""

    def __init__(self, channels, out_channels, n_levels=3):
        super().__init__()
        cat = n_levels * channels
        # a 1x1 depthwise conv is a per-channel affine map; grouped conv is slow on CPU
        self.dw_weight = nn.Parameter(torch.ones(cat))
        self.dw_bias = nn.Parameter(torch.zeros(cat))
        self.pointwise = nn.Conv2d(cat, out_channels, 1)

    def forward(self, *maps):
        shapes = {tuple(m.shape) for m in maps}
        if len(shapes) != 1:
            raise ShapeError(f"merge_levels needs identical shapes, got {sorted(shapes)}")
        x = torch.cat(maps, dim=1)
        x = x * self.dw_weight[:, None, None] + self.dw_bias[:, None, None]
        return self.pointwise(x)


def merge_levels(a1, a2, a3, module):
    return module(a1, a2, a3)


class CBR(nn.Sequential):
    def __init__(self, channels):
        super().__init__(
            nn.Conv2d(channels, channels, 1, bias=False),
            nn.BatchNorm2d(channels),
            nn.ReLU(),
        )


class DBR(nn.Sequential):
    def __init__(self, channels):
        super().__init__(
            nn.Conv2d(channels, channels, 3, padding=1, groups=channels, bias=False),
            nn.Conv2d(channels, channels, 1, bias=False),
            nn.BatchNorm2d(channels),
            nn.ReLU(),
        )


class HAFS(nn.Module):
    """Hierarchical awareness feature selector.

    ``out = A * gate + H_proj`` with ``H_proj = CBR(guide)`` and
    ``A = sigmoid(conv1x1(DBR(gate + H_proj)))`` a one-channel map.
    Passing ``guide=gate`` gives the single-input form.
    """

    def __init__(self, channels):
        super().__init__()
        self.cbr = CBR(channels)
        self.dbr = DBR(channels)
        self.attn_proj = nn.Conv2d(channels, 1, 1)

    def forward(self, gate, guide=None, return_attn=False):
        if guide is None:
            guide = gate
        if gate.shape != guide.shape:
            raise ShapeError(f"hafs needs matching shapes, got {tuple(gate.shape)} and {tuple(guide.shape)}")
        h_proj = self.cbr(guide)
        attn = torch.sigmoid(self.attn_proj(self.dbr(gate + h_proj)))
        out = attn * gate + h_proj
        return (out, attn, h_proj) if return_attn else out


def hafs(gate, guide, module, return_attn=False):
    return module(gate, guide, return_attn=return_attn)


class DHFCM(nn.Module):
    def __init__(self, cfg, use_hafs=True):
        super().__init__()
        fc = cfg.fused_channels
        self.cross = nn.ModuleDict(
            {str(s): CrossAttention(fc, c, cfg.vit_dim) for s, c in zip((2, 4, 8), cfg.cnn_channels[:3])}
        )
        self.merge = LevelMerge(fc, fc)
        self.hafs = HAFS(fc) if use_hafs else None

    def enrich(self, pyr):
        high = pyr.fused_high
        parts = [cross_attend(high, pyr[s], self.cross[str(s)]).data for s in (2, 4, 8)]
        return self.merge(*parts)

    def forward(self, p1, p2):
        e1, e2 = self.enrich(p1), self.enrich(p2)
        if self.hafs is not None:
            # shared parameters, roles swapped
            r1, r2 = self.hafs(e1, e2), self.hafs(e2, e1)
        else:
            r1, r2 = e1, e2
        refined1 = FeaturePyramid(p1.levels, FeatureMap(r1, 16, p1.phase))
        refined2 = FeaturePyramid(p2.levels, FeatureMap(r2, 16, p2.phase))
        diffs = {s: FeatureMap((p1[s].data - p2[s].data).abs(), s, "diff") for s in (2, 4, 8)}
        diffs[16] = FeatureMap((r1 - r2).abs(), 16, "diff")
        return refined1, refined2, DifferencePyramid(diffs)


def dhfcm_forward(p1, p2, module):
    return module(p1, p2)
