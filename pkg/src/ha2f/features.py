"""Light tagged containers passed between the encoder, DHFCM and decoder.

Tensors are batched ``(B, C, H, W)``; the tags only carry the bookkeeping
needed for contract checks (which scale, which temporal phase).
"""
from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import ContractError, NumericError

SCALES = (2, 4, 8, 16)


@dataclass
class FeatureMap:
    data: torch.Tensor
    scale: int
    phase: int | str

    @property
    def channels(self):
        return self.data.shape[1]

    @property
    def spatial(self):
        return tuple(self.data.shape[-2:])

    def check_finite(self, what="feature map"):
        if not torch.isfinite(self.data).all():
            raise NumericError(f"{what} at scale 1/{self.scale} contains non-finite values")
        return self


@dataclass
class FeaturePyramid:
    levels: dict[int, FeatureMap]
    fused_high: FeatureMap

    def __post_init__(self):
        missing = set(SCALES) - set(self.levels)
        if missing:
            raise ContractError(f"pyramid missing scales {sorted(missing)}")
        phases = {fm.phase for fm in self.levels.values()} | {self.fused_high.phase}
        if len(phases) != 1:
            raise ContractError(f"pyramid levels disagree on phase: {sorted(map(str, phases))}")
        if self.fused_high.scale != 16:
            raise ContractError("fused_high must live at scale 1/16")

    @property
    def phase(self):
        return self.fused_high.phase

    def __getitem__(self, scale):
        return self.levels[scale]


@dataclass
class DifferencePyramid:
    levels: dict[int, FeatureMap]

    def __post_init__(self):
        missing = set(SCALES) - set(self.levels)
        if missing:
            raise ContractError(f"difference pyramid missing scales {sorted(missing)}")

    def __getitem__(self, scale):
        return self.levels[scale]
