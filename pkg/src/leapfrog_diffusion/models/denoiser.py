"""Denoising module: social-temporal context encoder plus noise estimator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics import DimensionError, Tensor, as_tensor, matmul, relu, reshape
from .config import EncoderConfig
from .encoders import SocialTemporalFusion
from .layers import Linear, Module


def step_embedding(steps, dim: int) -> np.ndarray:
    """Sinusoidal encoding ``[sin(s f_i), cos(s f_i)]``, ``f_i = 10000^(-i/(dim/2))``."""
    steps = np.atleast_1d(np.asarray(steps, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    angles = steps[:, None] * freqs[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=-1)


@dataclass
class Context:
    """Context vector ``C`` ``[B, d_c]`` and its projection into the first
    noise-estimator layer (computed once, reused at every denoising step)."""

    vector: Tensor
    projected: Tensor


class Denoiser(Module):
    """``max_step`` (the schedule length) bounds the accepted step index."""

    def __init__(self, store, cfg: EncoderConfig, prefix: str = "denoiser", rng=None, max_step: int | None = None):
        super().__init__(store, prefix, rng)
        self.cfg = cfg
        self.max_step = max_step
        self.context_encoder = SocialTemporalFusion(store, f"{prefix}.context", cfg, cfg.context_dim, rng=rng)
        h, n_traj = cfg.denoiser_hidden, 2 * cfg.t_future
        fan_in = n_traj + cfg.context_dim + cfg.step_embed
        # first layer split by input block: trajectory / context / step
        self.w_traj = self.param("eps.in.w_traj", (n_traj, h), fan_in)
        self.w_ctx = self.param("eps.in.w_ctx", (cfg.context_dim, h), fan_in)
        self.w_step = self.param("eps.in.w_step", (cfg.step_embed, h), fan_in)
        self.b_in = self.param("eps.in.b", (h,), fan_in)
        self.hidden = [Linear(store, f"{prefix}.eps.h{i}", h, h, rng) for i in range(cfg.denoiser_layers - 2)]
        self.out = Linear(store, f"{prefix}.eps.out", h, n_traj, rng)
        self.forward_passes = 0

    def context(self, past, neighbors) -> Context:
        c = self.context_encoder(past, neighbors)
        return Context(vector=c, projected=matmul(c, self.w_ctx) + self.b_in)

    def estimate_noise(self, y_next, context: Context, step) -> Tensor:
        """Noise estimate for noisy futures ``[B, K, T_f, 2]`` at diffusion step(s) ``step``.

        ``step`` is an int shared by the batch or an int array ``[B]``.
        """
        y_next = as_tensor(y_next)
        if y_next.ndim != 4 or y_next.shape[2:] != (self.cfg.t_future, 2):
            raise DimensionError(f"noisy futures must be [B, K, {self.cfg.t_future}, 2], got {y_next.shape}")
        B, K = y_next.shape[:2]
        steps = np.broadcast_to(np.asarray(step), (B,))
        if np.any(steps < 1):
            raise IndexError(f"diffusion step must be >= 1, got {steps.min()}")
        if self.max_step is not None and np.any(steps > self.max_step):
            raise IndexError(f"diffusion step {steps.max()} exceeds {self.max_step}")
        self.forward_passes += 1
        emb = step_embedding(steps[:1] if np.ndim(step) == 0 else steps, self.cfg.step_embed)
        cond = context.projected + matmul(Tensor(emb), self.w_step)
        h = relu(matmul(reshape(y_next, (B, K, -1)), self.w_traj) + reshape(cond, (-1, 1, self.cfg.denoiser_hidden)))
        for layer in self.hidden:
            h = relu(layer(h))
        return reshape(self.out(h), (B, K, self.cfg.t_future, 2))

    def __call__(self, y_next, context: Context, step) -> Tensor:
        return self.estimate_noise(y_next, context, step)


def context_encode(past, neighbors, denoiser: Denoiser) -> Context:
    return denoiser.context(past, neighbors)


def estimate_noise(y_next, context: Context, step, denoiser: Denoiser) -> Tensor:
    return denoiser.estimate_noise(y_next, context, step)
