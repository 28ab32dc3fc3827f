"""Leapfrog diffusion sampling for multimodal trajectory prediction."""

__version__ = "0.1.0"

from .estimator import LeapfrogDiffusion  # noqa: E402

__all__ = ["LeapfrogDiffusion", "__version__"]
