"""Siamese hybrid encoder: a small ViT for global 1/16 context, a four-stage
residual CNN for 1/2..1/16 detail, and 1x1-conv fusion of the two 1/16 maps.
"""
import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError, ShapeError
from .features import FeatureMap, FeaturePyramid


class MultiHeadSelfAttention(nn.Module):
    def __init__(self, dim, heads):
        super().__init__()
        if dim % heads:
            raise ConfigError(f"dim={dim} not divisible by heads={heads}")
        self.dim, self.heads = dim, heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x, return_attn=False):
        B, N, D = x.shape
        hd = D // self.heads
        q, k, v = self.qkv(x).reshape(B, N, 3, self.heads, hd).permute(2, 0, 3, 1, 4)
        attn = torch.softmax(q @ k.transpose(-2, -1) / math.sqrt(hd), dim=-1)
        out = self.proj((attn @ v).transpose(1, 2).reshape(B, N, D))
        return (out, attn) if return_attn else out


class ViTBlock(nn.Module):
    """Pre-norm transformer layer: x + MHSA(LN(x)), then x + FFN(LN(x))."""

    def __init__(self, dim, heads, mlp_ratio=4):
        super().__init__()
        self.dim = dim
        self.ln1 = nn.LayerNorm(dim)
        self.attn = MultiHeadSelfAttention(dim, heads)
        self.ln2 = nn.LayerNorm(dim)
        self.ffn = nn.Sequential(
            nn.Linear(dim, mlp_ratio * dim),
            nn.GELU(),
            nn.Linear(mlp_ratio * dim, dim),
        )

    def forward(self, x, return_attn=False):
        a, attn = self.attn(self.ln1(x), return_attn=True)
        x = x + a
        x = x + self.ffn(self.ln2(x))
        return (x, attn) if return_attn else x


def vit_block(tokens, block, return_attn=False):
    """Apply one transformer layer to a token grid ``(N, D)`` or ``(B, N, D)``."""
    if tokens.shape[-1] != block.dim:
        raise ConfigError(f"token width {tokens.shape[-1]} does not match block dim {block.dim}")
    if tokens.dim() == 2:
        out = block(tokens[None], return_attn=return_attn)
        if return_attn:
            return out[0][0], out[1][0]
        return out[0]
    return block(tokens, return_attn=return_attn)


class ViTBranch(nn.Module):
    def __init__(self, cfg):
        super().__init__()
        self.cfg = cfg
        self.patch_embed = nn.Conv2d(3, cfg.vit_dim, cfg.patch_size, stride=cfg.patch_size)
        self.pos_embed = nn.Parameter(torch.zeros(1, cfg.n_tokens, cfg.vit_dim))
        self.blocks = nn.ModuleList(ViTBlock(cfg.vit_dim, cfg.vit_heads) for _ in range(cfg.vit_depth))

    def forward(self, image):
        x = self.patch_embed(image)
        B, D, h, w = x.shape
        x = x.flatten(2).transpose(1, 2) + self.pos_embed
        for blk in self.blocks:
            x = blk(x)
        return x.transpose(1, 2).reshape(B, D, h, w)


class BasicBlock(nn.Module):
    """Two 3x3 conv-BN layers with a projection shortcut; downsamples by ``stride``."""

    def __init__(self, cin, cout, stride=2):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(cout)
        self.shortcut = nn.Identity()
        if stride != 1 or cin != cout:
            self.shortcut = nn.Sequential(
                nn.Conv2d(cin, cout, 1, stride=stride, bias=False),
                nn.BatchNorm2d(cout),
            )

    def forward(self, x):
        out = F.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return F.relu(out + self.shortcut(x))


class CNNBranch(nn.Module):
    def __init__(self, channels):
        super().__init__()
        chans = [3, *channels]
        self.stages = nn.ModuleList(BasicBlock(chans[i], chans[i + 1]) for i in range(4))

    def forward(self, image):
        feats = {}
        x = image
        for i, stage in enumerate(self.stages):
            x = stage(x)
            feats[2 ** (i + 1)] = x
        return feats


def _check_image(image, expected=None):
    if image.dim() != 4 or image.shape[1] != 3:
        raise ShapeError(f"expected an RGB batch (B, 3, H, W), got shape {tuple(image.shape)}")
    for name, n in (("height", image.shape[2]), ("width", image.shape[3])):
        if n % 16:
            raise ShapeError(f"image {name} {n} is not divisible by 16")
        if expected is not None and n != expected:
            raise ShapeError(f"image {name} {n} does not match configured input_size {expected}")


class SiameseBackbone(nn.Module):
    """Weight-shared encoder; call it once per temporal phase."""

    def __init__(self, cfg):
        super().__init__()
        self.cfg = cfg
        self.vit = ViTBranch(cfg)
        self.cnn = CNNBranch(cfg.cnn_channels)
        self.fuse = nn.Conv2d(cfg.vit_dim + cfg.cnn_channels[3], cfg.fused_channels, 1)

    def extract_cnn_pyramid(self, image, phase=1):
        _check_image(image)
        return {s: FeatureMap(f, s, phase) for s, f in self.cnn(image).items()}

    def forward(self, image, phase=1):
        _check_image(image, self.cfg.input_size)
        levels = self.extract_cnn_pyramid(image, phase)
        fv = self.vit(image)
        fused = self.fuse(torch.cat([fv, levels[16].data], dim=1))
        return FeaturePyramid(levels, FeatureMap(fused, 16, phase))

    extract_pyramid = forward


def extract_cnn_pyramid(image, backbone, phase=1):
    return backbone.extract_cnn_pyramid(image, phase)


def extract_pyramid(image, backbone, phase=1):
    return backbone(image, phase)
