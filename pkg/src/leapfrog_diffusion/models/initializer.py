"""The three-headed leapfrog initializer.

The mean head predicts the shared mean trajectory, the variance head one
log-variance ``o`` per scene (``sigma = exp(o / 2)``), and the sample head
all ``K`` normalised sample offsets in a single pass, conditioned on an
embedding of ``sigma``.  Samples are reparameterised as
``Y_k = mu + sigma * S_k``; nothing random enters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics import Tensor, as_tensor, exp, reshape
from .config import EncoderConfig
from .encoders import SocialTemporalFusion
from .layers import MLP, Module

HEADS = ("mean", "variance", "sample")


@dataclass
class LeapfrogOutput:
    mean: Tensor  # [B, T_f, 2]
    sigma: Tensor  # [B]
    samples: Tensor  # [B, K, T_f, 2] normalised offsets
    y_tau: Tensor  # [B, K, T_f, 2]

    def numpy(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k).data for k in ("mean", "sigma", "samples", "y_tau")}


class LeapfrogInitializer(Module):
    def __init__(self, store, cfg: EncoderConfig, prefix: str = "init", rng=None):
        super().__init__(store, prefix, rng)
        self.cfg = cfg
        n_out = 2 * cfg.t_future
        self.mean_head = SocialTemporalFusion(store, f"{prefix}.mean", cfg, n_out, rng=rng)
        self.variance_head = SocialTemporalFusion(store, f"{prefix}.variance", cfg, 1, rng=rng)
        self.sigma_encoder = MLP(store, f"{prefix}.sample.sigma_enc", [1, cfg.sigma_embed, cfg.sigma_embed], rng)
        self.sample_head = SocialTemporalFusion(
            store, f"{prefix}.sample", cfg, cfg.n_samples * n_out, extra_dim=cfg.sigma_embed, rng=rng
        )

    def head_forward(self, name: str, past, neighbors, extra=None) -> Tensor:
        B = as_tensor(past).shape[0]
        T_f, K = self.cfg.t_future, self.cfg.n_samples
        if name == "mean":
            return reshape(self.mean_head(past, neighbors), (B, T_f, 2))
        if name == "variance":
            # raw log-variance o, shape [B]
            return reshape(self.variance_head(past, neighbors), (B,))
        if name == "sample":
            if extra is None:
                raise ValueError("the sample head needs the sigma estimate as extra input")
            e_sigma = self.sigma_encoder(reshape(as_tensor(extra), (B, 1)))
            return reshape(self.sample_head(past, neighbors, e_sigma), (B, K, T_f, 2))
        raise ValueError(f"unknown head {name!r}; expected one of {HEADS}")

    def __call__(self, past, neighbors) -> LeapfrogOutput:
        mean = self.head_forward("mean", past, neighbors)
        sigma = exp(self.head_forward("variance", past, neighbors) * 0.5)
        samples = self.head_forward("sample", past, neighbors, extra=sigma)
        B = sigma.shape[0]
        y_tau = reshape(mean, (B, 1) + mean.shape[1:]) + reshape(sigma, (B, 1, 1, 1)) * samples
        return LeapfrogOutput(mean=mean, sigma=sigma, samples=samples, y_tau=y_tau)


def head_forward(name: str, past, neighbors, extra, initializer: LeapfrogInitializer) -> Tensor:
    return initializer.head_forward(name, past, neighbors, extra)


def leapfrog_init(past, neighbors, initializer: LeapfrogInitializer) -> LeapfrogOutput:
    return initializer(past, neighbors)
