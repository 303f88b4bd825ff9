"""The assembled change-detection network and its seeded initialiser."""
import torch
import torch.nn as nn

from . import seeding
from .backbone import SiameseBackbone
from .config import Ablation
from .dhfcm import DHFCM
from .head import ChangeDecoder
from .nafrm import NAFRM


def init_weights(model, seed):
    """Deterministic initialisation; replaces pretrained weights."""
    g = seeding.torch_generator(seed, "init")
    for m in model.modules():
        if isinstance(m, nn.Conv2d):
            fan_in = m.in_channels // m.groups * m.kernel_size[0] * m.kernel_size[1]
            with torch.no_grad():
                m.weight.normal_(0.0, (2.0 / fan_in) ** 0.5, generator=g)
                if m.bias is not None:
                    m.bias.zero_()
        elif isinstance(m, nn.Linear):
            bound = (1.0 / m.in_features) ** 0.5
            with torch.no_grad():
                m.weight.uniform_(-bound, bound, generator=g)
                if m.bias is not None:
                    m.bias.zero_()
        elif isinstance(m, (nn.BatchNorm2d, nn.LayerNorm)):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)
    for m in model.modules():
        if isinstance(m, NAFRM) and m.bias_conv is not None:
            # start from the identity warp
            nn.init.zeros_(m.bias_conv.weight)
            nn.init.zeros_(m.bias_conv.bias)
    with torch.no_grad():
        model.backbone.vit.pos_embed.normal_(0.0, 0.02, generator=g)
    return model


class HA2F(nn.Module):
    def __init__(self, cfg, ablation=None):
        super().__init__()
        ablation = ablation or Ablation()
        self.cfg, self.ablation = cfg, ablation
        self.backbone = SiameseBackbone(cfg)
        self.dhfcm = DHFCM(cfg, use_hafs=ablation.hafs)
        self.decoder = ChangeDecoder(cfg, sat=ablation.sat, dfsm=ablation.dfsm)
        init_weights(self, cfg.seed)

    def features(self, a, b):
        p1 = self.backbone(a, phase=1)
        p2 = self.backbone(b, phase=2)
        return self.dhfcm(p1, p2)

    def forward(self, a, b):
        """Change logits ``(B, H, W)`` for image batches ``(B, 3, H, W)``."""
        _, _, diffs = self.features(a, b)
        return self.decoder(diffs)


def n_parameters(model):
    return sum(p.numel() for p in model.parameters() if p.requires_grad)
