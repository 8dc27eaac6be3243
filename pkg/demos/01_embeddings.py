"""From a detector feature map and a box to a metric-space embedding.

Walks the embedding pipeline one step at a time: rescale the box onto the
feature grid, pool the masked cells into per-channel moments, and see why
higher-order blocks add information that plain average pooling throws away.

Run: python3 demos/01_embeddings.py
"""

import numpy as np

from oboi import BoundingBox, ReductionConfig, build_mask, central_moments, reduce_features

rng = np.random.default_rng(7)

# ---------------------------------------------------------------- the mask
# A 64x64 image with a 4x4 feature grid: each cell covers 16x16 pixels and
# is kept iff its center falls inside the box.
box = BoundingBox(16.0, 16.0, 48.0, 48.0)
mask = build_mask(box, image_size=(64, 64), feature_dims=(4, 4))
print("box", box.as_list(), "on a 4x4 grid over 64x64 pixels:")
print(mask.astype(int))

# A box smaller than one cell still selects exactly one cell (the one
# containing the box center), so pooling never runs on nothing.
tiny = build_mask(BoundingBox(1.0, 1.0, 2.0, 2.0), (64, 64), (4, 4))
print("degenerate 1px-ish box keeps", int(tiny.sum()), "cell")

# ------------------------------------------------------ per-channel moments
# The pooled statistics per channel: block 1 is the raw mean, block n >= 2
# the n-th central moment (population convention, divisor N).
values = np.array([1.0, 2.0, 3.0, 6.0])
print("\ncentral_moments([1,2,3,6], 4) =", central_moments(values, 4))

# ----------------------------------------------------------- ee vs aee
# Two channels with the same mean but different spread: average pooling
# (mode 'ee') cannot tell them apart, the R=2 embedding can.
h = w = 6
flat = rng.normal(0.0, 1.0, (h, w))
wide = rng.normal(0.0, 3.0, (h, w))
fmap = np.stack([flat - flat.mean(), wide - wide.mean()], axis=-1)

ee = reduce_features(fmap, None, ReductionConfig(mode="ee", use_mask=False))
aee = reduce_features(fmap, None, ReductionConfig(mode="aee", moment_order=2, use_mask=False))
print("\nee  (means only):        ", np.round(ee, 4))
print("aee (means + variances): ", np.round(aee, 4))

# --------------------------------------------------------- scale behaviour
# Scaling the features by alpha scales moment block n by alpha^n; the
# blocks live on different scales, which is what the standardize flag and
# the SimpleShot transforms are there to tame.
alpha = 2.0
scaled = reduce_features(
    alpha * fmap, None, ReductionConfig(mode="aee", moment_order=2, use_mask=False)
)
print("\nalpha =", alpha)
print("block 1 ratio:", np.round(scaled[:2] / aee[:2], 6), "(alpha^1)")
print("block 2 ratio:", np.round(scaled[2:] / aee[2:], 6), "(alpha^2)")

# ------------------------------------------------------------- masked pool
# With the mask on, only cells under the box contribute; background cells
# never pollute the prototype.
fmap_bg = fmap.copy()
fmap_bg[~mask[:2, :2].repeat(3, 0).repeat(3, 1)] += 100.0  # garbage outside
masked = reduce_features(
    fmap_bg,
    mask[:2, :2].repeat(3, 0).repeat(3, 1),
    ReductionConfig(mode="aee", moment_order=2),
)
print("\nmasked pooling ignores the +100 background:", np.round(masked[:2], 4))
