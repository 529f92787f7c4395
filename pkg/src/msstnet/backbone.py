"""Per-frame multi-scale CNN feature extractor.

A small residual network stands in for ResNet-18: each stage is a strided
3x3 conv followed by ``depth`` residual blocks, and every tapped stage is
area-pooled to a grid that the embedding layer can split into ``N`` patches.
Frames are folded into the batch axis, so nothing here mixes time steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .numerics import Rng, Tensor


@dataclass(frozen=True)
class StageSpec:
    out_channels: int
    stride: int = 2
    kernel: int = 3
    depth: int = 1


@dataclass(frozen=True)
class BackboneConfig:
    """Stage layout plus the pooled grid emitted for each tapped stage.

    ``taps`` indexes ``stages``; it defaults to every stage. ``target_grids``
    has one ``(rows, cols)`` entry per tap.
    """

    stages: tuple[StageSpec, ...] = (StageSpec(16), StageSpec(32), StageSpec(64))
    input_size: tuple[int, int] = (32, 32)
    target_grids: tuple[tuple[int, int], ...] = ((8, 8), (4, 4), (4, 4))
    in_channels: int = 3
    taps: tuple[int, ...] | None = None

    @property
    def tap_indices(self) -> tuple[int, ...]:
        return tuple(range(len(self.stages))) if self.taps is None else tuple(self.taps)

    @property
    def num_scales(self) -> int:
        return len(self.tap_indices)

    def stage_sizes(self) -> list[tuple[int, int]]:
        """Spatial size of each stage's output before pooling."""
        h, w = self.input_size
        sizes = []
        for st in self.stages:
            pad = st.kernel // 2
            h = (h + 2 * pad - st.kernel) // st.stride + 1
            w = (w + 2 * pad - st.kernel) // st.stride + 1
            sizes.append((h, w))
        return sizes

    def scale_channels(self) -> list[int]:
        return [self.stages[i].out_channels for i in self.tap_indices]

    def validate(self, n_patches: int | None = None) -> None:
        if not self.stages:
            raise ValueError("backbone needs at least one stage")
        if any(st.out_channels <= 0 or st.stride <= 0 or st.kernel <= 0 or st.depth < 0 for st in self.stages):
            raise ValueError("stage channels, strides and kernels must be positive")
        if self.in_channels <= 0:
            raise ValueError("in_channels must be positive")
        taps = self.tap_indices
        if not taps or any(not 0 <= t < len(self.stages) for t in taps):
            raise ValueError(f"taps {taps} out of range for {len(self.stages)} stages")
        if len(self.target_grids) != len(taps):
            raise ValueError(f"{len(self.target_grids)} target grids for {len(taps)} tapped stages")
        sizes = self.stage_sizes()
        if any(h <= 0 or w <= 0 for h, w in sizes):
            raise ValueError(f"input {self.input_size} too small for the stage strides")
        if n_patches is not None:
            side = math.isqrt(n_patches)
            if side * side != n_patches:
                raise ValueError(f"N={n_patches} is not a perfect square")
            for gh, gw in self.target_grids:
                if gh % side or gw % side:
                    raise ValueError(f"target grid {gh}x{gw} not divisible into {n_patches} patches")


def nearest_grid(size: int, n_patches: int) -> int:
    """Largest multiple of sqrt(N) not exceeding ``size`` (at least sqrt(N))."""
    side = math.isqrt(n_patches)
    return max(side, (size // side) * side)


@dataclass
class FeaturePyramid:
    """One tensor per scale, each ``(T, d_s, H'_s, W'_s)`` (batched: ``(B, T, ...)``)."""

    scales: list[Tensor] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.scales)

    @property
    def frames(self) -> int:
        return self.scales[0].shape[-4]


class Backbone:
    def __init__(self, config: BackboneConfig, rng: Rng):
        config.validate()
        self.config = config
        self.params: dict[str, Tensor] = {}
        cin = config.in_channels
        for si, st in enumerate(config.stages[: max(config.tap_indices) + 1]):
            self._conv(f"stage{si}.down", cin, st.out_channels, st.kernel, rng)
            for bi in range(st.depth):
                self._conv(f"stage{si}.block{bi}.conv1", st.out_channels, st.out_channels, 3, rng)
                self._conv(f"stage{si}.block{bi}.conv2", st.out_channels, st.out_channels, 3, rng)
            cin = st.out_channels
        sizes = config.stage_sizes()
        self._pool = [
            (nx.area_weights(sizes[t][0], g[0]), nx.area_weights(sizes[t][1], g[1]))
            for t, g in zip(config.tap_indices, config.target_grids)
        ]

    def _conv(self, name: str, cin: int, cout: int, k: int, rng: Rng) -> None:
        std = math.sqrt(2.0 / (cin * k * k))
        self.params[name + ".weight"] = nx.parameter(rng.child(name).normal((cout, cin, k, k), std), name + ".weight")
        self.params[name + ".bias"] = nx.parameter(np.zeros(cout), name + ".bias")

    def _apply_conv(self, name: str, x: Tensor, stride: int = 1) -> Tensor:
        w = self.params[name + ".weight"]
        return nx.conv2d(x, w, self.params[name + ".bias"], stride=stride, pad=w.shape[-1] // 2)

    def stage_outputs(self, frames: Tensor) -> list[Tensor]:
        """Raw (unpooled) output of every computed stage for ``(F, C, H, W)`` frames."""
        outs = []
        x = frames
        for si, st in enumerate(self.config.stages[: max(self.config.tap_indices) + 1]):
            x = nx.relu(self._apply_conv(f"stage{si}.down", x, st.stride))
            for bi in range(st.depth):
                h = nx.relu(self._apply_conv(f"stage{si}.block{bi}.conv1", x))
                h = self._apply_conv(f"stage{si}.block{bi}.conv2", h)
                x = nx.relu(nx.add(x, h))
            outs.append(x)
        return outs

    def __call__(self, frames: Tensor) -> list[Tensor]:
        """Pooled feature map per tap for ``(F, C, H, W)`` frames."""
        outs = self.stage_outputs(frames)
        return [
            nx.resample2d(outs[t], rows, cols) for t, (rows, cols) in zip(self.config.tap_indices, self._pool)
        ]


def extract_pyramid(clip, backbone: Backbone) -> FeaturePyramid:
    """Run the backbone frame by frame over ``(T, 3, H, W)`` or ``(B, T, 3, H, W)``."""
    clip = clip if isinstance(clip, Tensor) else Tensor(clip)
    cfg = backbone.config
    if clip.ndim not in (4, 5) or clip.shape[-3] != cfg.in_channels:
        raise nx.ShapeError(f"clip must be (T, {cfg.in_channels}, H, W) or batched; got {clip.shape}")
    if tuple(clip.shape[-2:]) != tuple(cfg.input_size):
        raise nx.ShapeError(f"clip frames are {clip.shape[-2:]}, backbone expects {cfg.input_size}")
    lead = clip.shape[:-3]
    frames = nx.reshape(clip, (-1,) + clip.shape[-3:])
    maps = backbone(frames)
    return FeaturePyramid([nx.reshape(m, lead + m.shape[1:]) for m in maps])


def default_tiny_backbone(
    seed: int,
    input_size: tuple[int, int] = (32, 32),
    target_grids: tuple[tuple[int, int], ...] = ((8, 8), (4, 4), (4, 4)),
    depths: tuple[int, int, int] = (1, 1, 1),
) -> Backbone:
    """Three residual stages with 16/32/64 channels, each halving resolution."""
    stages = tuple(StageSpec(c, stride=2, kernel=3, depth=d) for c, d in zip((16, 32, 64), depths))
    cfg = BackboneConfig(stages=stages, input_size=tuple(input_size), target_grids=tuple(target_grids))
    return Backbone(cfg, Rng(seed).child("backbone"))
