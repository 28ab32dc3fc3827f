"""Social (attention) and temporal (conv + GRU) encoders and their fusion.

Inputs are batched: ego past ``[B, T_p, 2]`` and neighbour pasts
``[B, L, T_p, 2]``, already expressed in the ego-centred frame.
"""

from __future__ import annotations

import numpy as np

from ..numerics import (
    DimensionError,
    Tensor,
    as_tensor,
    concat,
    conv1d,
    matmul,
    relu,
    reshape,
    softmax,
    transpose,
)
from ..numerics.nn import gru_cell
from .config import EncoderConfig
from .layers import MLP, Linear, Module


def multihead_attention(query: Tensor, keys: Tensor, values: Tensor, n_heads: int) -> Tensor:
    """One query token per batch item against ``L`` key/value tokens.

    ``query`` is ``[B, d]``, ``keys``/``values`` are ``[B, L, d]``; returns the
    concatenated per-head readouts ``[B, d]`` (no output projection), with
    scores scaled by the per-head key width.
    """
    B, L, d = keys.shape
    dh = d // n_heads
    q = reshape(query, (B, n_heads, 1, dh))
    k = transpose(reshape(keys, (B, L, n_heads, dh)), (0, 2, 3, 1))  # [B, H, dh, L]
    v = transpose(reshape(values, (B, L, n_heads, dh)), (0, 2, 1, 3))  # [B, H, L, dh]
    weights = softmax(matmul(q, k) * (1.0 / np.sqrt(dh)), axis=-1)
    return reshape(matmul(weights, v), (B, d))


class SocialEncoder(Module):
    """Cross-attention from the ego past to each neighbour past.

    Each layer queries with the ego embedding plus the running social
    message, adds the attention readout to the message, then applies a
    bias-free residual feed-forward block.  The message starts at zero, so
    no neighbours (L = 0) or all-zero value projections give a zero output.
    """

    def __init__(self, store, prefix, cfg: EncoderConfig, rng=None):
        super().__init__(store, prefix, rng)
        self.cfg = cfg
        d, n_in = cfg.embed_dim, 2 * cfg.t_past
        self.ego = Linear(store, f"{prefix}.ego", n_in, d, rng)
        self.layers = []
        for i in range(cfg.attn_layers):
            p = f"{prefix}.layer{i}"
            self.layers.append(
                {
                    "q": Linear(store, f"{p}.q", d, d, rng),
                    # no key bias: softmax is shift invariant, so it would never receive a gradient
                    "k": Linear(store, f"{p}.k", n_in, d, rng, bias=False),
                    "v": Linear(store, f"{p}.v", n_in, d, rng),
                    "ff1": Linear(store, f"{p}.ff1", d, cfg.attn_ff_dim, rng, bias=False),
                    "ff2": Linear(store, f"{p}.ff2", cfg.attn_ff_dim, d, rng, bias=False),
                }
            )

    @property
    def out_dim(self) -> int:
        return self.cfg.embed_dim

    def __call__(self, past, neighbors) -> Tensor:
        past = as_tensor(past)
        neighbors = as_tensor(neighbors)
        if past.ndim != 3 or past.shape[1:] != (self.cfg.t_past, 2):
            raise DimensionError(f"ego past must be [B, {self.cfg.t_past}, 2], got {past.shape}")
        B = past.shape[0]
        L = neighbors.shape[1] if neighbors.ndim == 4 else 0
        if L == 0:
            return Tensor(np.zeros((B, self.cfg.embed_dim)))
        if neighbors.shape != (B, L, self.cfg.t_past, 2):
            raise DimensionError(f"neighbours must be [B, L, {self.cfg.t_past}, 2], got {neighbors.shape}")
        ego = self.ego(reshape(past, (B, -1)))
        nb = reshape(neighbors, (B, L, -1))
        msg = None
        for layer in self.layers:
            q = layer["q"](ego if msg is None else ego + msg)
            attn = multihead_attention(q, layer["k"](nb), layer["v"](nb), self.cfg.attn_heads)
            msg = attn if msg is None else msg + attn
            msg = msg + layer["ff2"](relu(layer["ff1"](msg)))
        return msg


class TemporalEncoder(Module):
    """Conv1d lift of the ego past followed by a GRU; returns the last state."""

    def __init__(self, store, prefix, cfg: EncoderConfig, rng=None):
        super().__init__(store, prefix, rng)
        self.cfg = cfg
        k, c, h = cfg.conv_kernel, cfg.conv_out, cfg.gru_hidden
        self.kernel = self.param("conv.w", (k, 2, c), 2 * k)
        self.kernel_b = self.param("conv.b", (c,), 2 * k)
        self.gru = {
            "w": self.param("gru.w", (c, 3 * h), c),
            "u_zr": self.param("gru.u_zr", (h, 2 * h), h),
            "u_h": self.param("gru.u_h", (h, h), h),
            "b": self.param("gru.b", (3 * h,), h),
        }

    @property
    def out_dim(self) -> int:
        return self.cfg.gru_hidden

    def __call__(self, past) -> Tensor:
        past = as_tensor(past)
        B, T = past.shape[0], past.shape[1]
        feats = relu(conv1d(past, self.kernel, self.kernel_b))
        h = Tensor(np.zeros((B, self.cfg.gru_hidden)))
        for t in range(T):
            h = gru_cell(feats[:, t, :], h, self.gru)
        return h


class SocialTemporalFusion(Module):
    """Parallel social + temporal encoders whose embeddings feed a 3-layer MLP."""

    def __init__(self, store, prefix, cfg: EncoderConfig, out_dim: int, extra_dim: int = 0, rng=None):
        super().__init__(store, prefix, rng)
        self.cfg = cfg
        self.social = SocialEncoder(store, f"{prefix}.social", cfg, rng)
        self.temporal = TemporalEncoder(store, f"{prefix}.temporal", cfg, rng)
        d_in = self.social.out_dim + self.temporal.out_dim + extra_dim
        self.fusion = MLP(store, f"{prefix}.fusion", [d_in, cfg.fusion_hidden, cfg.fusion_hidden, out_dim], rng)

    def embed(self, past, neighbors) -> list[Tensor]:
        return [self.social(past, neighbors), self.temporal(past)]

    def __call__(self, past, neighbors, extra: Tensor | None = None) -> Tensor:
        parts = self.embed(past, neighbors)
        if extra is not None:
            parts.append(as_tensor(extra))
        return self.fusion(concat(parts, axis=-1))
