"""Analytic FLOPs accounting and token/attention map dumps.

Convention: one multiply-accumulate is 2 FLOPs. Biases, activations,
normalisations, softmax and pooling are not counted. Every term below is a
product of shapes, so the same numbers come out of ``numerics.count_macs``
when a forward pass is actually executed.

Per clip of ``T`` frames:

* conv layer: ``2 k^2 c_in c_out H_out W_out T``
* embedding of scale ``s``: ``2 (P^2 d_s) D N T``
* per block: q/k/v ``3 * 2 D^2 N T``, scores plus mixing ``2 * 2 N T^2 D``,
  output projection ``2 D^2 N T``, MLP ``2 * 2 D D_mlp N T``
* head: ``2 D C``
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .model import ModelConfig, MSSTNet

STAGE_PARTS = ("qkv", "attention", "projection", "mlp")


@dataclass
class FlopsReport:
    backbone: int = 0
    melayer: int = 0
    stages: list[dict[str, int]] = field(default_factory=list)
    head: int = 0

    @property
    def tformer(self) -> int:
        return int(np.sum([sum(s.values()) for s in self.stages], dtype=np.int64))

    @property
    def total(self) -> int:
        return self.backbone + self.melayer + self.tformer + self.head

    def components(self) -> dict[str, int]:
        """Flat ``name -> FLOPs`` view; the values add up to ``total``."""
        out = {"backbone": self.backbone, "melayer": self.melayer}
        for s, parts in enumerate(self.stages):
            out.update({f"stage{s}.{k}": v for k, v in parts.items()})
        out["head"] = self.head
        return out

    def table(self) -> str:
        rows = list(self.components().items()) + [("total", self.total)]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v:>16,d}  {v / 1e9:10.4f} G" for k, v in rows)

    def write_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["component", "flops"])
            for k, v in self.components().items():
                wr.writerow([k, v])
            wr.writerow(["total", self.total])


def linear_flops(d_in: int, d_out: int, tokens: int) -> int:
    return 2 * d_in * d_out * tokens


def backbone_flops(config: ModelConfig) -> int:
    bb = config.backbone
    sizes = bb.stage_sizes()
    total = 0
    cin = bb.in_channels
    for si, st in enumerate(bb.stages[: max(bb.tap_indices) + 1]):
        ho, wo = sizes[si]
        c = st.out_channels
        total += 2 * st.kernel**2 * cin * c * ho * wo
        total += st.depth * 2 * (2 * 9 * c * c * ho * wo)
        cin = c
    return total * config.T


def block_flops(config: ModelConfig) -> dict[str, int]:
    d, n, t = config.D, config.N, config.T
    tokens = n * t
    return {
        "qkv": 3 * linear_flops(d, d, tokens),
        "attention": 2 * 2 * n * t * t * d,
        "projection": linear_flops(d, d, tokens),
        "mlp": linear_flops(d, config.mlp_width, tokens) + linear_flops(config.mlp_width, d, tokens),
    }


def count_flops(config: ModelConfig) -> FlopsReport:
    config.validate()
    tokens = config.N * config.T
    rep = FlopsReport()
    rep.backbone = backbone_flops(config)
    rep.melayer = int(np.sum([linear_flops(p, config.D, tokens) for p in config.patch_dims()]))
    per_block = block_flops(config)
    for s, nb in enumerate(config.blocks):
        k = nb if config.enabled[s] else 0
        rep.stages.append({part: k * per_block[part] for part in STAGE_PARTS})
    rep.head = linear_flops(config.D, config.C, 1)
    return rep


@dataclass
class ScalingRow:
    frames: int
    flops: int

    @property
    def per_frame(self) -> float:
        return self.flops / self.frames


def flops_scaling(config: ModelConfig, frames: Sequence[int]) -> list[ScalingRow]:
    if not len(frames):
        raise ValueError("need at least one frame count")
    return [ScalingRow(int(t), count_flops(replace(config, T=int(t))).total) for t in frames]


def scaling_table(rows: Sequence[ScalingRow]) -> str:
    base = rows[0].per_frame
    lines = [f"{'T':>4}  {'FLOPs (G)':>12}  {'FLOPs/T (G)':>12}  {'ratio':>8}"]
    for r in rows:
        lines.append(f"{r.frames:>4}  {r.flops / 1e9:12.4f}  {r.per_frame / 1e9:12.4f}  {r.flops / (base * rows[0].frames):8.4f}")
    return "\n".join(lines)


def write_scaling_csv(path: str | os.PathLike, rows: Sequence[ScalingRow]) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["T", "flops", "flops_per_frame"])
        for r in rows:
            wr.writerow([r.frames, r.flops, repr(r.per_frame)])


# ---------------------------------------------------------------------------
# map dumps
# ---------------------------------------------------------------------------


def token_norm_grids(tokens: np.ndarray) -> np.ndarray:
    """``(N, T, D)`` tokens -> ``(T, sqrt N, sqrt N)`` grid of token L2 norms."""
    n, t, _ = tokens.shape
    side = math.isqrt(n)
    return np.linalg.norm(tokens, axis=-1).T.reshape(t, side, side)


def dump_maps(model: MSSTNet, clip, out_path: str | os.PathLike, capture: bool = True) -> list[Path]:
    """Write token-norm grids and attention weights for one ``(T, 3, H, W)`` clip.

    One ``stage{s}_{pre|post}_t{t}.txt`` grid per (stage, frame), and one
    ``attention_stage{s}.csv`` per enabled stage.
    """
    if not capture:
        raise ValueError("dump_maps needs the capture flag; the forward pass keeps no maps without it")
    clip = np.asarray(clip, dtype=np.float64)
    if clip.ndim != 4:
        raise ValueError(f"dump_maps takes one clip (T, 3, H, W), got shape {clip.shape}")
    _, diag = model.forward(clip, capture=True)
    out = Path(out_path)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for s, (pre, post) in enumerate(zip(diag.pre, diag.post)):
        for tag, tokens in (("pre", pre), ("post", post)):
            for t, grid in enumerate(token_norm_grids(tokens)):
                p = out / f"stage{s}_{tag}_t{t}.txt"
                np.savetxt(p, grid, fmt="%.10e")
                written.append(p)
        if not diag.attention[s]:
            continue
        p = out / f"attention_stage{s}.csv"
        with open(p, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["block", "head", "patch", "t_query", "t_key", "weight"])
            for b, rec in enumerate(diag.attention[s]):
                for idx in np.ndindex(rec.weights.shape):
                    wr.writerow([b, *idx, repr(float(rec.weights[idx]))])
        written.append(p)
    return written


def read_attention_csv(path: str | os.PathLike) -> np.ndarray:
    """Inverse of the attention dump: ``(blocks, A, N, T, T)`` weights."""
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    idx = rows[:, :5].astype(np.int64)
    shape = tuple(idx.max(axis=0) + 1)
    out = np.zeros(shape)
    out[tuple(idx.T)] = rows[:, 5]
    return out
