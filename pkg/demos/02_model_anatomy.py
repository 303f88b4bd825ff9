# # Inside the model
#
# A siamese ViT + CNN backbone produces a pyramid per image, the calibration
# stage refines the 1/16 level with detail from 1/2, 1/4 and 1/8, and the
# decoder folds the per-scale differences back to full resolution.

# %%
import torch

from ha2f.config import Ablation, BackboneConfig
from ha2f.model import HA2F, n_parameters

cfg = BackboneConfig()
model = HA2F(cfg).eval()
print("parameters", n_parameters(model))

# %%
a = torch.rand(1, 3, 64, 64)
b = torch.rand(1, 3, 64, 64)
with torch.no_grad():
    pyr = model.backbone(a, phase=1)
for s in (2, 4, 8, 16):
    print(s, tuple(pyr[s].data.shape))
print("fused", tuple(pyr.fused_high.data.shape))

# %% [markdown]
# The refined 1/16 maps and the difference pyramid:

# %%
with torch.no_grad():
    r1, r2, diffs = model.features(a, b)
for s in (2, 4, 8, 16):
    print(s, tuple(diffs[s].data.shape))

# %% [markdown]
# At initialisation every bias is zero, so a pair of identical images gives
# zero logits everywhere, i.e. probability 0.5 exactly.

# %%
with torch.no_grad():
    logits = model(a, a.clone())
print(logits.shape, logits.abs().max().item())

# %% [markdown]
# Each of the three components can be switched off. The baseline keeps the
# backbone and a plain decoder.

# %%
for ab in (Ablation.baseline(), Ablation(hafs=True, sat=False, dfsm=False), Ablation()):
    print(ab.as_tuple(), n_parameters(HA2F(cfg, ab)))

# %% [markdown]
# The warp used by the refinement stage is a backward bilinear sampler. A
# zero flow is the identity and integer flows are plain index shifts.

# %%
from ha2f.nafrm import warp

f = torch.arange(16.0).view(1, 1, 4, 4)
flow = torch.zeros(1, 2, 4, 4)
flow[:, 0] = 1.0  # every pixel reads its right neighbour
print(warp(f, flow)[0, 0])
