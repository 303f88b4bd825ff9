import numpy as np
import torch
import torch.nn as nn

from ha2f.config import BackboneConfig


def tiny_backbone_cfg(**kw):
    base = dict(input_size=32, vit_dim=8, vit_depth=1, vit_heads=2, cnn_channels=[4, 4, 8, 8], fused_channels=8)
    base.update(kw)
    return BackboneConfig(**base)


def randomize(module, seed, scale=0.5):
    """Fill every parameter with N(0, scale^2); give BN layers random running stats."""
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in module.parameters():
            p.copy_(torch.randn(p.shape, generator=g, dtype=p.dtype) * scale)
        for m in module.modules():
            if isinstance(m, nn.BatchNorm2d):
                m.running_mean.copy_(torch.randn(m.running_mean.shape, generator=g, dtype=m.running_mean.dtype) * 0.3)
                m.running_var.copy_(torch.rand(m.running_var.shape, generator=g, dtype=m.running_var.dtype) + 0.5)
    return module


def zero_params(module):
    with torch.no_grad():
        for p in module.parameters():
            p.zero_()
    return module


def rand_tensor(rng, *shape, scale=1.0):
    return torch.from_numpy(rng.normal(size=shape) * scale)


def random_mask(rng, shape, p=0.3):
    return (rng.random(shape) < p).astype(np.uint8)
