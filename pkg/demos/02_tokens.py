"""From a clip to per-scale patch tokens.

A small CNN produces one feature map per scale and frame. Each map is cut into
N patches, every patch is flattened and embedded, and a learned vector per
frame index is added. Tokens therefore carry (patch, frame) coordinates.
"""

import numpy as np

from msstnet import MSSTNet, desk_config
from msstnet.backbone import extract_pyramid
from msstnet.melayer import patchify

cfg = desk_config()
model = MSSTNet(cfg)
clip = np.random.default_rng(1).random((cfg.T, 3, *cfg.backbone.input_size))

pyramid = extract_pyramid(clip, model.backbone)
for s, fmap in enumerate(pyramid.scales):
    patches = patchify(fmap, cfg.N)
    print(f"scale {s}: feature map {fmap.shape} -> patches {patches.shape}")

tokens = model.embed_scales(pyramid)
for grid in tokens:
    print(f"scale {grid.scale_index}: tokens (N, T, D) = {grid.tokens.shape}")

# the only thing that tells frames apart, besides content, is the position row
e_pos = model.melayer.e_pos[0].data
print("position rows:", e_pos.shape, "pairwise distinct:", len({r.tobytes() for r in e_pos}) == cfg.T)
