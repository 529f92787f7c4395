"""MSSTNet: backbone -> per-scale embedding -> chained T-Formers -> mean -> FC.

Stage ``i`` tokens are the embedded tokens of scale ``i`` plus the output of
stage ``i - 1``; a disabled stage passes its input through without blocks.
The last stage's tokens are averaged over patches and frames, then mapped to
class logits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import checkpoint
from . import numerics as nx
from .backbone import Backbone, BackboneConfig, FeaturePyramid, StageSpec, extract_pyramid
from .melayer import MELayerParams, TokenGrid, embed, init_melayer, patchify
from .numerics import Rng, Tensor
from .tformer import LN_EPS, AttentionRecord, TFormerBlockParams, init_block, tformer_forward


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters; defaults are the full-width setting.

    ``L`` is either one block count for every stage or one count per stage.
    """

    T: int = 16
    S: int = 3
    N: int = 16
    D: int = 768
    A: int = 8
    L: int | tuple[int, ...] = 2
    C: int = 7
    D_mlp: int | None = None
    backbone: BackboneConfig = field(
        default_factory=lambda: BackboneConfig(input_size=(112, 112), target_grids=((8, 8), (4, 4), (4, 4)))
    )
    stage_enabled: tuple[bool, ...] | None = None
    seed: int = 0
    tie_pos: bool = False
    pos_per_scale: bool = False
    pos_std: float = 0.02
    final_norm: bool = False

    @property
    def mlp_width(self) -> int:
        return 4 * self.D if self.D_mlp is None else self.D_mlp

    @property
    def head_dim(self) -> int:
        return self.D // self.A

    @property
    def enabled(self) -> tuple[bool, ...]:
        return (True,) * self.S if self.stage_enabled is None else tuple(self.stage_enabled)

    @property
    def blocks(self) -> tuple[int, ...]:
        return (self.L,) * self.S if isinstance(self.L, int) else tuple(self.L)

    def patch_dims(self) -> list[int]:
        """Flattened patch length ``P^2 d_s`` per scale."""
        return [
            d * gh * gw // self.N
            for d, (gh, gw) in zip(self.backbone.scale_channels(), self.backbone.target_grids)
        ]

    def validate(self) -> None:
        if min(self.T, self.S, self.N, self.D, self.A, self.C) < 1:
            raise ValueError("T, S, N, D, A and C must be positive")
        if self.D % self.A:
            raise ValueError(f"D={self.D} is not divisible by A={self.A}")
        if math.isqrt(self.N) ** 2 != self.N:
            raise ValueError(f"N={self.N} is not a perfect square")
        if len(self.enabled) != self.S or not any(self.enabled):
            raise ValueError("stage_enabled needs S entries with at least one stage enabled")
        if len(self.blocks) != self.S or any(b < 1 for b in self.blocks):
            raise ValueError("L must be a positive block count (or one per stage)")
        if self.backbone.num_scales != self.S:
            raise ValueError(f"backbone emits {self.backbone.num_scales} scales, config says S={self.S}")
        if self.pos_std < 0:
            raise ValueError("pos_std must be >= 0")
        if self.mlp_width < 1:
            raise ValueError("D_mlp must be positive")
        self.backbone.validate(self.N)


def desk_config(**overrides) -> ModelConfig:
    """Small setting that trains in minutes on one CPU core."""
    cfg = ModelConfig(
        T=4,
        S=2,
        N=16,
        D=64,
        A=4,
        L=1,
        C=4,
        backbone=BackboneConfig(
            stages=(StageSpec(16), StageSpec(32)),
            input_size=(32, 32),
            target_grids=((8, 8), (4, 4)),
        ),
    )
    return replace(cfg, **overrides)


def tiny_config(**overrides) -> ModelConfig:
    """Smallest meaningful setting, used for gradient and FLOPs checks."""
    cfg = ModelConfig(
        T=2,
        S=1,
        N=4,
        D=8,
        A=2,
        L=1,
        C=3,
        backbone=BackboneConfig(
            stages=(StageSpec(4, depth=1),),
            input_size=(8, 8),
            target_grids=((2, 2),),
        ),
    )
    return replace(cfg, **overrides)


@dataclass
class Diagnostics:
    """Per-stage intermediates kept when the forward pass runs with ``capture``.

    ``attention[s][l]`` is block ``l`` of stage ``s`` (empty for disabled
    stages); ``pre``/``post`` are the stage's input and output tokens.
    """

    attention: list[list[AttentionRecord]] = field(default_factory=list)
    pre: list[np.ndarray] = field(default_factory=list)
    post: list[np.ndarray] = field(default_factory=list)
    pooled: np.ndarray | None = None


def integrate_scales(prev: TokenGrid, next_embedded: TokenGrid) -> TokenGrid:
    """Elementwise sum fusing one stage's output into the next stage's tokens."""
    if prev.shape != next_embedded.shape:
        raise nx.ShapeError(f"cannot fuse token grids {prev.shape} and {next_embedded.shape}")
    return TokenGrid(nx.add(prev.tokens, next_embedded.tokens), next_embedded.scale_index)


class MSSTNet:
    def __init__(self, config: ModelConfig):
        config.validate()
        self.config = config
        rng = Rng(config.seed)
        self.backbone = Backbone(config.backbone, rng.child("backbone"))
        self.melayer: MELayerParams = init_melayer(
            config.patch_dims(),
            config.D,
            config.T,
            rng.child("melayer"),
            per_scale_pos=config.pos_per_scale,
            tied=config.tie_pos,
            pos_std=config.pos_std,
        )
        self.stages: list[list[TFormerBlockParams]] = [
            [init_block(config.D, config.A, config.mlp_width, rng.child(f"stage{s}.block{b}")) for b in range(nb)]
            for s, nb in enumerate(config.blocks)
        ]
        self.final_gamma = nx.parameter(np.ones(config.D), "final_norm.gamma")
        self.final_beta = nx.parameter(np.zeros(config.D), "final_norm.beta")
        head = rng.child("head")
        self.head_w = nx.parameter(head.normal((config.C, config.D), 0.02), "head.weight")
        self.head_b = nx.parameter(np.zeros(config.C), "head.bias")

    # ------------------------------------------------------------------ params

    def parameters(self) -> dict[str, Tensor]:
        """Every trainable tensor, keyed by its checkpoint name.

        Blocks of disabled stages and the unused final norm are excluded.
        """
        out: dict[str, Tensor] = {}
        out.update({f"backbone.{k}": v for k, v in self.backbone.params.items()})
        out.update(self.melayer.parameters())
        for s, blocks in enumerate(self.stages):
            if not self.config.enabled[s]:
                continue
            for b, blk in enumerate(blocks):
                out.update(blk.parameters(f"stage{s}.block{b}."))
        if self.config.final_norm:
            out["final_norm.gamma"] = self.final_gamma
            out["final_norm.beta"] = self.final_beta
        out["head.weight"] = self.head_w
        out["head.bias"] = self.head_b
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise KeyError(f"checkpoint mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, p in params.items():
            if state[k].shape != p.shape:
                raise nx.ShapeError(f"{k}: checkpoint shape {state[k].shape} != model shape {p.shape}")
            p.data = np.array(state[k], dtype=np.float64)

    def save(self, path) -> None:
        checkpoint.save(path, self.state_dict())

    def load(self, path) -> None:
        self.load_state_dict(checkpoint.load(path))

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.grad = None

    def identity_blocks(self) -> None:
        for blocks in self.stages:
            for blk in blocks:
                blk.zero_residual_branches()

    # ----------------------------------------------------------------- forward

    def embed_scales(self, pyramid: FeaturePyramid) -> list[TokenGrid]:
        return [embed(patchify(fmap, self.config.N), self.melayer, s) for s, fmap in enumerate(pyramid.scales)]

    def forward(self, clip, capture: bool = False) -> tuple[Tensor, Diagnostics]:
        """Logits for ``(T, 3, H, W)`` (-> ``(C,)``) or ``(B, T, 3, H, W)`` (-> ``(B, C)``)."""
        clip = clip if isinstance(clip, Tensor) else Tensor(clip)
        if clip.ndim in (4, 5) and clip.shape[-4] > self.config.T and not self.config.tie_pos:
            raise nx.ShapeError(f"clip has {clip.shape[-4]} frames, model was built for T={self.config.T}")
        pyramid = extract_pyramid(clip, self.backbone)
        return self.forward_tokens(self.embed_scales(pyramid), capture)

    def forward_tokens(self, embedded: list[TokenGrid], capture: bool = False) -> tuple[Tensor, Diagnostics]:
        """Everything after the embedding layer, from per-scale embedded tokens."""
        diag = Diagnostics()
        z: TokenGrid | None = None
        for s, tokens in enumerate(embedded):
            z = tokens if z is None else integrate_scales(z, tokens)
            if capture:
                diag.pre.append(z.tokens.data.copy())
            if self.config.enabled[s]:
                z, records = tformer_forward(z, self.stages[s])
            else:
                records = []
            if capture:
                diag.attention.append(records)
                diag.post.append(z.tokens.data.copy())
        x = z.tokens
        if self.config.final_norm:
            x = nx.layer_norm(x, self.final_gamma, self.final_beta, LN_EPS)
        pooled = nx.mean(x, axis=(-3, -2))
        if capture:
            diag.pooled = pooled.data.copy()
        return nx.linear(pooled, self.head_w, self.head_b), diag

    __call__ = forward


def forward(clip, model: MSSTNet, capture: bool = False) -> tuple[Tensor, Diagnostics]:
    return model.forward(clip, capture)


def predict_distribution(logits) -> np.ndarray:
    """Class probabilities (softmax over the last axis) from raw logits."""
    x = logits.data if isinstance(logits, Tensor) else np.asarray(logits, dtype=np.float64)
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)
