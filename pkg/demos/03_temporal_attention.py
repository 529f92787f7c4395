"""Attention runs over time only, separately for each spatial patch.

Two consequences are shown here: perturbing other patches never changes a
patch's output, and with identical position rows the classifier cannot tell
frame orders apart.
"""

import numpy as np

from msstnet import MSSTNet, desk_config
from msstnet import numerics as nx
from msstnet.backbone import extract_pyramid
from msstnet.melayer import TokenGrid

cfg = desk_config(L=2, seed=5)
model = MSSTNet(cfg)
rng = np.random.default_rng(5)
clip = rng.random((cfg.T, 3, *cfg.backbone.input_size))

emb = model.embed_scales(extract_pyramid(clip, model.backbone))
with nx.no_grad():
    logits, diag = model.forward_tokens(emb, capture=True)
rec = diag.attention[0][0]
print("attention weights (heads, patches, t_query, t_key):", rec.weights.shape)
print("row sums deviate from 1 by at most", np.abs(rec.weights.sum(-1) - 1).max())

keep = 3
noisy = []
for e in emb:
    x = e.tokens.data.copy()
    x[np.arange(cfg.N) != keep] += rng.normal(size=(cfg.N - 1, cfg.T, cfg.D))
    noisy.append(TokenGrid(nx.tensor(x), e.scale_index))
with nx.no_grad():
    _, diag2 = model.forward_tokens(noisy, capture=True)
print("patch", keep, "output unchanged:", np.array_equal(diag.post[-1][keep], diag2.post[-1][keep]))

order = [2, 0, 3, 1]
print("generic positions, reordered frames change logits:",
      not np.allclose(model(clip)[0].data, model(clip[order])[0].data))
model.melayer.e_pos[0].data[:] = model.melayer.e_pos[0].data[0]
print("equal positions, reordered frames change logits:",
      not np.allclose(model(clip)[0].data, model(clip[order])[0].data, atol=1e-12, rtol=0))
