# # Component ablation
#
# The three components (hierarchy-aware fusion, the bias-field warp and the
# dual gating) can each be switched on or off. The runner trains one model
# per combination with the same seed and reports test scores for the best
# validation checkpoint.
#
# At this scale the scores are noisy and say nothing reliable about which
# component matters. The run shows the plumbing, nothing more.

# %%
from ha2f.config import BackboneConfig, SynthConfig, TrainConfig
from ha2f.data import synth_split
from ha2f.trainer import ablation_text, run_ablation

synth = SynthConfig(size=64)
train = synth_split(synth, "train", 16)
val = synth_split(synth, "val", 8)
test = synth_split(synth, "test", 8)

rows = run_ablation(BackboneConfig(), TrainConfig(eval_every=25), train, val, test, max_steps=50)
print(ablation_text(rows))

# %% [markdown]
# The model gets larger with every component that is switched on.

# %%
for r in rows:
    print(r.ablation.as_tuple(), r.n_params)
