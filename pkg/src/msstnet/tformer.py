"""Temporal transformer: pre-norm encoder blocks attending only across frames.

Attention for token ``(p, t)`` ranges over ``(p, t')`` for every frame
``t'`` and never over other patch positions, so each patch's trajectory is
processed independently. Head ``a`` owns rows ``a*D_h:(a+1)*D_h`` of the
stacked ``W_Q``/``W_K``/``W_V`` matrices and the matching columns of ``W_O``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .melayer import TokenGrid
from .numerics import Rng, Tensor

LN_EPS = 1e-5


@dataclass
class TFormerBlockParams:
    heads: int
    ln1_gamma: Tensor
    ln1_beta: Tensor
    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_o: Tensor
    ln2_gamma: Tensor
    ln2_beta: Tensor
    mlp_w1: Tensor
    mlp_b1: Tensor
    mlp_w2: Tensor
    mlp_b2: Tensor

    @property
    def d_model(self) -> int:
        return self.w_o.shape[0]

    @property
    def head_dim(self) -> int:
        return self.d_model // self.heads

    def parameters(self, prefix: str = "") -> dict[str, Tensor]:
        names = (
            "ln1_gamma", "ln1_beta", "w_q", "w_k", "w_v", "w_o",
            "ln2_gamma", "ln2_beta", "mlp_w1", "mlp_b1", "mlp_w2", "mlp_b2",
        )  # fmt: skip
        return {prefix + n: getattr(self, n) for n in names}

    def zero_residual_branches(self) -> None:
        """Zero ``W_O`` and the MLP output layer so the block is the identity."""
        self.w_o.data = np.zeros_like(self.w_o.data)
        self.mlp_w2.data = np.zeros_like(self.mlp_w2.data)
        self.mlp_b2.data = np.zeros_like(self.mlp_b2.data)


def init_block(d_model: int, heads: int, d_mlp: int | None, rng: Rng, std: float | None = None) -> TFormerBlockParams:
    """Gaussian weights, std ``1/sqrt(fan_in)`` unless ``std`` is given; unit LayerNorms."""
    if d_model % heads:
        raise ValueError(f"D={d_model} is not divisible by A={heads}")
    d_mlp = 4 * d_model if d_mlp is None else d_mlp

    def w(name, shape):
        sd = 1.0 / math.sqrt(shape[1]) if std is None else std
        return nx.parameter(rng.child(name).normal(shape, sd), name)

    return TFormerBlockParams(
        heads=heads,
        ln1_gamma=nx.parameter(np.ones(d_model)),
        ln1_beta=nx.parameter(np.zeros(d_model)),
        w_q=w("w_q", (d_model, d_model)),
        w_k=w("w_k", (d_model, d_model)),
        w_v=w("w_v", (d_model, d_model)),
        w_o=w("w_o", (d_model, d_model)),
        ln2_gamma=nx.parameter(np.ones(d_model)),
        ln2_beta=nx.parameter(np.zeros(d_model)),
        mlp_w1=w("mlp_w1", (d_mlp, d_model)),
        mlp_b1=nx.parameter(np.zeros(d_mlp)),
        mlp_w2=w("mlp_w2", (d_model, d_mlp)),
        mlp_b2=nx.parameter(np.zeros(d_model)),
    )


@dataclass
class AttentionRecord:
    """Attention weights of one block: ``(A, N, T, T)`` (batched: ``(B, A, N, T, T)``)."""

    weights: np.ndarray

    def row_sums(self) -> np.ndarray:
        return self.weights.sum(axis=-1)


def _split_heads(x: Tensor, heads: int) -> Tensor:
    # (..., N, T, D) -> (..., A, N, T, D_h)
    *lead, n, t, d = x.shape
    k = len(lead)
    x = nx.reshape(x, (*lead, n, t, heads, d // heads))
    return nx.transpose(x, tuple(range(k)) + (k + 2, k, k + 1, k + 3))


def _merge_heads(x: Tensor) -> Tensor:
    # (..., A, N, T, D_h) -> (..., N, T, A*D_h)
    *lead, a, n, t, dh = x.shape
    k = len(lead)
    x = nx.transpose(x, tuple(range(k)) + (k + 1, k + 2, k, k + 3))
    return nx.reshape(x, (*lead, n, t, a * dh))


def qkv_project(z: TokenGrid, params: TFormerBlockParams) -> tuple[Tensor, Tensor, Tensor]:
    """Queries, keys and values per head from one shared LayerNorm of ``z``."""
    x = z.tokens
    if x.shape[-1] != params.d_model:
        raise nx.ShapeError(f"tokens have width {x.shape[-1]}, block expects D={params.d_model}")
    h = nx.layer_norm(x, params.ln1_gamma, params.ln1_beta, LN_EPS)
    return tuple(_split_heads(nx.linear(h, w), params.heads) for w in (params.w_q, params.w_k, params.w_v))


def temporal_attention(q: Tensor, k: Tensor, v: Tensor) -> tuple[Tensor, AttentionRecord]:
    """Softmax attention over the frame axis within each (head, patch)."""
    if not (q.shape == k.shape == v.shape):
        raise nx.ShapeError(f"q/k/v shapes differ: {q.shape}, {k.shape}, {v.shape}")
    nd = q.ndim
    scores = nx.bmm(nx.scale(q, 1.0 / math.sqrt(q.shape[-1])), nx.transpose(k, tuple(range(nd - 2)) + (nd - 1, nd - 2)))
    alpha = nx.softmax_lastdim(scores)
    return nx.bmm(alpha, v), AttentionRecord(alpha.data)


def mlp(x: Tensor, params: TFormerBlockParams) -> Tensor:
    return nx.linear(nx.gelu(nx.linear(x, params.mlp_w1, params.mlp_b1)), params.mlp_w2, params.mlp_b2)


def block_forward(z_in: TokenGrid, params: TFormerBlockParams) -> tuple[TokenGrid, AttentionRecord]:
    q, k, v = qkv_project(z_in, params)
    s, record = temporal_attention(q, k, v)
    z_mid = nx.add(nx.linear(_merge_heads(s), params.w_o), z_in.tokens)
    h = nx.layer_norm(z_mid, params.ln2_gamma, params.ln2_beta, LN_EPS)
    z_out = nx.add(mlp(h, params), z_mid)
    return TokenGrid(z_out, z_in.scale_index), record


def tformer_forward(z0: TokenGrid, blocks: list[TFormerBlockParams]) -> tuple[TokenGrid, list[AttentionRecord]]:
    if not blocks:
        raise ValueError("a T-Former needs at least one block")
    z = z0
    records = []
    for params in blocks:
        z, rec = block_forward(z, params)
        records.append(rec)
    return z, records
