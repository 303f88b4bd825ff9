# # Training on a small synthetic set
#
# A short run on 16 pairs, about a minute and a half on one CPU core. For
# the first couple of hundred steps the model predicts background
# everywhere, then validation F1 climbs quickly. Fitting the training set
# almost perfectly takes a couple of thousand steps.

# %%
from ha2f.config import BackboneConfig, SynthConfig, TrainConfig
from ha2f.data import synth_split
from ha2f.trainer import fit, poly_lr

synth = SynthConfig(size=64)
train = synth_split(synth, "train", 16)
val = synth_split(synth, "val", 8)

cfg = TrainConfig(max_steps=800, eval_every=100)
print([round(poly_lr(s, cfg), 7) for s in (0, 400, 800)])

# %%
result = fit(BackboneConfig(), cfg, train, val)
for line in result.log:
    if "val" in line:
        print(line["step"], {k: round(v, 3) for k, v in line["val"].items()})

# %% [markdown]
# The best checkpoint is chosen on validation F1, with IoU and then the
# earlier step breaking ties.

# %%
best = result.best
print("best step", best.step, best.val_scores.short())

# %% [markdown]
# Masks for new pairs come from ``predict``, which thresholds the sigmoid at
# 0.5 inclusive.

# %%
from ha2f.trainer import evaluate, model_from_record, predict
from ha2f.config import Ablation

model = model_from_record(BackboneConfig(), Ablation(), best)
test = synth_split(synth, "test", 4)
masks = predict(model, test)
print(masks[0].shape, masks[0].dtype)
counts, s = evaluate(model, test)
print(counts.as_dict(), s.short())
