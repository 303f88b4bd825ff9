"""Noise-adaptive feature refinement.

A 3x3 conv predicts a 4-channel displacement field from a (low, high)
resolution pair, both streams are resampled along it, and DFSM fuses the
aligned streams under channel and spatial gates.
"""
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ContractError, NumericError, ShapeError
from .features import FeatureMap

VAR_FLOOR = 1e-12


def upsample2(x):
    return F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)


def warp(feature, flow):
    """Bilinearly resample ``feature`` at ``(x + dx, y + dy)``.

    ``flow`` is ``(B, 2, H, W)`` in pixel units, channel 0 horizontal and
    channel 1 vertical. Sample points outside the grid are clamped to the
    border, so zero flow is the identity.
    """
    if flow.dim() != 4 or flow.shape[1] != 2:
        raise ShapeError(f"flow must be (B, 2, H, W), got {tuple(flow.shape)}")
    if flow.shape[0] != feature.shape[0] or flow.shape[-2:] != feature.shape[-2:]:
        raise ShapeError(f"flow {tuple(flow.shape)} does not match feature {tuple(feature.shape)}")
    if not torch.isfinite(flow).all():
        raise NumericError("warp flow contains non-finite values")
    B, C, H, W = feature.shape
    ys = torch.arange(H, dtype=flow.dtype, device=flow.device).view(1, H, 1)
    xs = torch.arange(W, dtype=flow.dtype, device=flow.device).view(1, 1, W)
    x = (xs + flow[:, 0]).clamp(0, W - 1)
    y = (ys + flow[:, 1]).clamp(0, H - 1)
    x0, y0 = x.detach().floor(), y.detach().floor()
    fx, fy = (x - x0)[:, None], (y - y0)[:, None]
    x0, y0 = x0.long(), y0.long()
    x1, y1 = (x0 + 1).clamp(max=W - 1), (y0 + 1).clamp(max=H - 1)
    flat = feature.reshape(B, C, H * W)

    def gather(yi, xi):
        idx = (yi * W + xi).reshape(B, 1, H * W).expand(B, C, H * W)
        return flat.gather(2, idx).reshape(B, C, H, W)

    top = gather(y0, x0) * (1 - fx) + gather(y0, x1) * fx
    bottom = gather(y1, x0) * (1 - fx) + gather(y1, x1) * fx
    return top * (1 - fy) + bottom * fy


class DFSM(nn.Module):
    """Dual feature selection: per-channel gate from GAP+MLP, per-position gate
    from a 7x7 conv over the channel mean and standard deviation."""

    def __init__(self, channels, reduction=4):
        super().__init__()
        if reduction < 1:
            raise ValueError("reduction must be >= 1")
        hidden = max(1, channels // reduction)
        self.mlp = nn.Sequential(nn.Linear(channels, hidden), nn.ReLU(), nn.Linear(hidden, channels))
        self.conv7 = nn.Conv2d(2, 1, 7, padding=3)

    def gates(self, f):
        channel = torch.sigmoid(self.mlp(f.mean(dim=(2, 3))))[:, :, None, None]
        mu = f.mean(dim=1, keepdim=True)
        std = f.var(dim=1, unbiased=False, keepdim=True).clamp_min(VAR_FLOOR).sqrt()
        spatial = torch.sigmoid(self.conv7(torch.cat([mu, std], dim=1)))
        return channel, spatial

    def forward(self, wl, wh, return_gates=False):
        if wl.shape != wh.shape:
            raise ShapeError(f"dfsm needs matching shapes, got {tuple(wl.shape)} and {tuple(wh.shape)}")
        f = wl + wh
        channel, spatial = self.gates(f)
        out = f * channel * spatial
        return (out, channel, spatial) if return_gates else out


def dfsm(wl, wh, module, return_gates=False):
    return module(wl, wh, return_gates=return_gates)


class NAFRM(nn.Module):
    """One decoder fusion stage; ``sat`` and ``dfsm`` switch the optional parts."""

    def __init__(self, low_channels, high_channels, sat=True, dfsm=True, reduction=4):
        super().__init__()
        self.reduce = nn.Conv2d(low_channels, high_channels, 1)
        self.bias_conv = nn.Conv2d(2 * high_channels, 4, 3, padding=1) if sat else None
        self.dfsm = DFSM(high_channels, reduction) if dfsm else None

    def bias_field(self, low, high, low_up=None):
        if self.bias_conv is None:
            raise ContractError("bias field requested from a stage built without SAT")
        if low_up is None:
            low_up = upsample2(self.reduce(low))
        return self.bias_conv(torch.cat([high, low_up], dim=1))

    def forward(self, low, high, return_field=False):
        if low.shape[0] != high.shape[0] or tuple(d * 2 for d in low.shape[-2:]) != tuple(high.shape[-2:]):
            raise ShapeError(f"low {tuple(low.shape)} is not one level below high {tuple(high.shape)}")
        low_up = upsample2(self.reduce(low))
        field = None
        if self.bias_conv is not None:
            field = self.bias_field(low, high, low_up)
            wh = warp(high, field[:, 0:2])
            wl = warp(low_up, field[:, 2:4])
        else:
            wl, wh = low_up, high
        out = self.dfsm(wl, wh) if self.dfsm is not None else wl + wh
        return (out, field) if return_field else out


def _check_adjacent(low, high):
    if low.scale != 2 * high.scale:
        raise ContractError(f"low scale 1/{low.scale} must be one level below high scale 1/{high.scale}")


def gen_bias_field(low, high, module):
    """4-channel field ``(dx_high, dy_high, dx_low, dy_low)`` at ``high``'s resolution."""
    _check_adjacent(low, high)
    return FeatureMap(module.bias_field(low.data, high.data), high.scale, high.phase)


def nafrm_forward(low, high, module):
    _check_adjacent(low, high)
    return FeatureMap(module(low.data, high.data), high.scale, high.phase)
