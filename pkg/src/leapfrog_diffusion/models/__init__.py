from .config import EncoderConfig
from .denoiser import Context, Denoiser, context_encode, estimate_noise, step_embedding
from .encoders import SocialEncoder, SocialTemporalFusion, TemporalEncoder, multihead_attention
from .initializer import HEADS, LeapfrogInitializer, LeapfrogOutput, head_forward, leapfrog_init
from .layers import MLP, Linear, Module

__all__ = [
    "HEADS",
    "MLP",
    "Context",
    "Denoiser",
    "EncoderConfig",
    "LeapfrogInitializer",
    "LeapfrogOutput",
    "Linear",
    "Module",
    "SocialEncoder",
    "SocialTemporalFusion",
    "TemporalEncoder",
    "context_encode",
    "estimate_noise",
    "head_forward",
    "leapfrog_init",
    "multihead_attention",
    "step_embedding",
]
