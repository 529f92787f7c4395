"""Analytic FLOP count, split by component, and its growth with clip length."""

import numpy as np

from msstnet import ModelConfig, count_flops, flops_scaling, tiny_config, MSSTNet
from msstnet import numerics as nx

report = count_flops(ModelConfig(T=4))
print(report.table())

rows = flops_scaling(ModelConfig(), [4, 8, 12, 16])
for r in rows:
    print(f"T={r.frames:2d}  {r.flops / 1e9:6.2f} G  per frame {r.per_frame / 1e9:.4f} G")

# the count is exact: it matches MACs recorded while running the model
cfg = tiny_config()
with nx.no_grad(), nx.count_macs() as c:
    MSSTNet(cfg)(np.zeros((cfg.T, 3, *cfg.backbone.input_size)))
print("tiny model: analytic", count_flops(cfg).total, "instrumented", c.flops)
