"""Multi-scale embedding: patch split, flatten, linear embed, temporal position.

Patch ``p`` enumerates the sqrt(N) x sqrt(N) patch grid in raster order, and
each patch flattens as (channel, row, column). Tokens carry no spatial
position; the only positional signal is the per-frame embedding added here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .numerics import Rng, Tensor


@dataclass
class TokenGrid:
    """Tokens of one scale, ``(N, T, D)`` per clip or ``(B, N, T, D)`` batched."""

    tokens: Tensor
    scale_index: int = 0

    @property
    def shape(self) -> tuple[int, ...]:
        return self.tokens.shape


def _patch_grid(h: int, w: int, n_patches: int) -> tuple[int, int, int]:
    side = math.isqrt(n_patches)
    if side * side != n_patches or h % side or w % side:
        raise ValueError(f"feature map {h}x{w} (H'={h}, W'={w}) cannot be split into N={n_patches} equal patches")
    return side, h // side, w // side


def patchify(fmap, n_patches: int) -> Tensor:
    """``(..., T, d, H, W)`` -> ``(..., N, T, ph*pw*d)`` non-overlapping patches."""
    fmap = fmap if isinstance(fmap, Tensor) else Tensor(fmap)
    *lead, t, d, h, w = fmap.shape
    side, ph, pw = _patch_grid(h, w, n_patches)
    k = len(lead)
    x = nx.reshape(fmap, (*lead, t, d, side, ph, side, pw))
    # (..., T, d, gy, ph, gx, pw) -> (..., gy, gx, T, d, ph, pw)
    axes = tuple(range(k)) + tuple(k + a for a in (2, 4, 0, 1, 3, 5))
    x = nx.transpose(x, axes)
    return nx.reshape(x, (*lead, n_patches, t, d * ph * pw))


def unpatchify(patches: np.ndarray, channels: int, height: int, width: int) -> np.ndarray:
    """Inverse of :func:`patchify` on plain arrays."""
    *lead, n, t, _ = patches.shape
    side, ph, pw = _patch_grid(height, width, n)
    k = len(lead)
    x = patches.reshape(*lead, side, side, t, channels, ph, pw)
    axes = tuple(range(k)) + tuple(k + a for a in (2, 3, 0, 4, 1, 5))
    return x.transpose(axes).reshape(*lead, t, channels, height, width)


@dataclass
class MELayerParams:
    """One embedding matrix per scale, ``(D, P^2 d_s)``, and the position table.

    ``e_pos`` is ``(T_max, D)``; with ``tied`` it holds one row broadcast over
    every frame. With ``per_scale`` it is a list of tables, one per scale.
    """

    E: list[Tensor]
    e_pos: list[Tensor]
    tied: bool = False

    def pos_for(self, scale: int) -> Tensor:
        return self.e_pos[scale] if len(self.e_pos) > 1 else self.e_pos[0]

    def parameters(self) -> dict[str, Tensor]:
        out = {f"melayer.E{s}": e for s, e in enumerate(self.E)}
        if len(self.e_pos) == 1:
            out["melayer.e_pos"] = self.e_pos[0]
        else:
            out.update({f"melayer.e_pos{s}": p for s, p in enumerate(self.e_pos)})
        return out


def init_melayer(
    patch_dims: list[int],
    d_model: int,
    max_frames: int,
    rng: Rng,
    *,
    per_scale_pos: bool = False,
    tied: bool = False,
    pos_std: float = 0.02,
) -> MELayerParams:
    """``E`` gets fan-in scaled Gaussian weights; ``e_pos`` a Gaussian with ``pos_std``."""
    rows = 1 if tied else max_frames
    E = [
        nx.parameter(rng.child(f"E{s}").normal((d_model, k), 1.0 / math.sqrt(k)), f"melayer.E{s}")
        for s, k in enumerate(patch_dims)
    ]
    n_pos = len(patch_dims) if per_scale_pos else 1
    pos = [nx.parameter(rng.child(f"e_pos{s}").normal((rows, d_model), pos_std), "melayer.e_pos") for s in range(n_pos)]
    return MELayerParams(E=E, e_pos=pos, tied=tied)


def embed(patches, params: MELayerParams, scale: int) -> TokenGrid:
    """``token(p, t) = E x(p, t) + e_pos(t)``; no bias, no spatial term."""
    patches = patches if isinstance(patches, Tensor) else Tensor(patches)
    E = params.E[scale]
    if patches.shape[-1] != E.shape[1]:
        raise nx.ShapeError(f"patch vectors have length {patches.shape[-1]}, E{scale} expects {E.shape[1]}")
    t = patches.shape[-2]
    pos = params.pos_for(scale)
    if params.tied:
        rows = pos
    else:
        if t > pos.shape[0]:
            raise nx.ShapeError(f"{t} frames exceed the {pos.shape[0]} positional embeddings")
        rows = pos if t == pos.shape[0] else pos[:t]
    return TokenGrid(nx.add(nx.linear(patches, E), rows), scale)
