# # Scores and error maps
#
# Confusion counts are summed over a whole split before any ratio is taken.

# %%
import numpy as np

from ha2f.metrics import ConfusionCounts, accumulate, render_error_map, report_text, scores

counts = ConfusionCounts(tp=3, tn=11, fp=1, fn=1)
s = scores(counts)
print(s.short())
print(report_text(counts, s))

# %% [markdown]
# F1 and IoU are tied: F1 = 2 IoU / (1 + IoU).

# %%
print(s.f1, 2 * s.iou / (1 + s.iou))

# %% [markdown]
# Accumulating mask by mask:

# %%
rng = np.random.default_rng(0)
total = ConfusionCounts()
for _ in range(3):
    gt = (rng.random((8, 8)) < 0.3).astype(np.uint8)
    pred = gt.copy()
    pred[rng.random((8, 8)) < 0.1] ^= 1
    total = accumulate(pred, gt, total)
print(total.as_dict(), scores(total).short())

# %% [markdown]
# A scene with no change and no prediction has undefined precision and
# recall. They come back as 0 with a warning and the result is flagged.

# %%
import warnings

with warnings.catch_warnings(record=True):
    warnings.simplefilter("always")
    empty = scores(accumulate(np.zeros((4, 4), np.uint8), np.zeros((4, 4), np.uint8)))
print(empty.short(), empty.degenerate)

# %% [markdown]
# Error maps: white for hits, black for correct background, red for false
# alarms and green for misses.

# %%
pred = np.array([[1, 1], [0, 0]], np.uint8)
gt = np.array([[1, 0], [1, 0]], np.uint8)
print(render_error_map(pred, gt).reshape(-1, 3))
