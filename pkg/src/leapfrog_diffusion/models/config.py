from __future__ import annotations

from dataclasses import asdict, dataclass

from ..errors import ConfigError


@dataclass(frozen=True)
class EncoderConfig:
    """Architecture sizes.  ``embed_dim`` is the attention width ``d``."""

    t_past: int = 8
    t_future: int = 12
    n_samples: int = 20
    embed_dim: int = 64
    attn_ff_dim: int = 256
    attn_heads: int = 2
    attn_layers: int = 2
    conv_kernel: int = 3
    conv_out: int = 32
    gru_hidden: int = 256
    fusion_hidden: int = 256
    sigma_embed: int = 32
    context_dim: int = 256
    denoiser_hidden: int = 256
    denoiser_layers: int = 4
    step_embed: int = 64

    def __post_init__(self):
        for name, value in asdict(self).items():
            if int(value) != value or value < 1:
                raise ConfigError(f"model.{name} must be a positive integer, got {value}")
        if self.conv_kernel % 2 == 0:
            raise ConfigError(f"model.conv_kernel must be odd, got {self.conv_kernel}")
        if self.embed_dim % self.attn_heads:
            raise ConfigError("model.embed_dim must be divisible by model.attn_heads")
        if self.step_embed % 2:
            raise ConfigError("model.step_embed must be even")
        if self.denoiser_layers < 2:
            raise ConfigError("model.denoiser_layers must be >= 2")

    def as_dict(self) -> dict:
        return asdict(self)
