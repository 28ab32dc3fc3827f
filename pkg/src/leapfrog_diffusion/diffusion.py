"""Noise schedules, forward diffusion, and the single denoising step.

Indexing: ``beta[s - 1]`` is the noise scale of diffusion step ``s`` for
``s = 1..steps``; ``alpha_bar[g]`` is the cumulative product up to step ``g``
with ``alpha_bar[0] == 1``.  Removing the noise of step ``s`` (moving from
state ``s`` to ``s - 1``) uses ``alpha[s - 1]`` and ``alpha_bar[s]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .numerics import Tensor, as_tensor, frobenius_norm

SCHEDULE_KINDS = ("linear", "sigmoid", "quadratic")
SIGMOID_SHARPNESS = 6.0


@dataclass(frozen=True)
class DiffusionSchedule:
    kind: str
    steps: int
    beta: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    alpha_bar: np.ndarray = field(repr=False)

    def check_step(self, s: int, low: int = 1) -> None:
        if not low <= s <= self.steps:
            raise IndexError(f"diffusion step {s} outside [{low}, {self.steps}]")


def make_schedule(kind: str = "linear", beta1: float = 1e-4, beta_end: float = 5e-2, steps: int = 100) -> DiffusionSchedule:
    if kind not in SCHEDULE_KINDS:
        raise ConfigError(f"unknown schedule kind {kind!r}; expected one of {SCHEDULE_KINDS}")
    if int(steps) != steps or steps < 1:
        raise ConfigError(f"schedule needs a positive integer step count, got {steps}")
    if not 0.0 < beta1 <= beta_end < 1.0:
        raise ConfigError(f"schedule endpoints must satisfy 0 < beta1 <= betaT < 1, got {beta1}, {beta_end}")
    steps = int(steps)
    if steps == 1:
        beta = np.array([beta1], dtype=np.float64)
    else:
        idx = np.arange(steps, dtype=np.float64)
        frac = idx / (steps - 1)
        if kind == "linear":
            beta = beta1 + idx * (beta_end - beta1) / (steps - 1)
        elif kind == "quadratic":
            beta = (np.sqrt(beta1) + frac * (np.sqrt(beta_end) - np.sqrt(beta1))) ** 2
        else:
            sig = 1.0 / (1.0 + np.exp(-SIGMOID_SHARPNESS * (2.0 * frac - 1.0)))
            sig = (sig - sig[0]) / (sig[-1] - sig[0])
            beta = beta1 + (beta_end - beta1) * sig
        # endpoints pinned exactly regardless of rounding in the interpolation
        beta[0] = beta1
        beta[-1] = beta_end
    alpha = 1.0 - beta
    alpha_bar = np.concatenate([[1.0], np.cumprod(alpha)])
    for arr in (beta, alpha, alpha_bar):
        arr.setflags(write=False)
    return DiffusionSchedule(kind=kind, steps=steps, beta=beta, alpha=alpha, alpha_bar=alpha_bar)


@dataclass(frozen=True)
class DiffusedSample:
    step: int
    y: np.ndarray
    noise: np.ndarray


def diffuse(y0: np.ndarray, step: int, noise: np.ndarray, sched: DiffusionSchedule) -> DiffusedSample:
    """Closed-form forward marginal ``sqrt(ab) y0 + sqrt(1 - ab) noise``."""
    sched.check_step(step)
    ab = sched.alpha_bar[step]
    y = np.sqrt(ab) * np.asarray(y0) + np.sqrt(1.0 - ab) * np.asarray(noise)
    return DiffusedSample(step=step, y=y, noise=np.asarray(noise))


def denoise_coefficients(step: int, sched: DiffusionSchedule) -> tuple[float, float, float]:
    """``(1/sqrt(alpha_s), beta_s/sqrt(1 - ab_s), sqrt(beta_s))`` for removing step ``s``."""
    sched.check_step(step)
    a = sched.alpha[step - 1]
    b = sched.beta[step - 1]
    return 1.0 / np.sqrt(a), b / np.sqrt(1.0 - sched.alpha_bar[step]), np.sqrt(b)


def denoise_step(y_next, eps_hat, z, target: int, sched: DiffusionSchedule):
    """Produce the state at index ``target`` from the state at ``target + 1``.

    Works on numpy arrays or Tensors (differentiable in ``y_next`` and
    ``eps_hat``).  The fresh-noise term is dropped when ``target == 0``.
    """
    if not 0 <= target <= sched.steps - 1:
        raise IndexError(f"denoise target {target} outside [0, {sched.steps - 1}]")
    inv_sqrt_a, eps_coef, noise_scale = denoise_coefficients(target + 1, sched)
    if isinstance(y_next, Tensor) or isinstance(eps_hat, Tensor):
        out = (as_tensor(y_next) - as_tensor(eps_hat) * eps_coef) * inv_sqrt_a
        if target > 0 and z is not None:
            out = out + np.asarray(z) * noise_scale
        return out
    out = (np.asarray(y_next) - eps_coef * np.asarray(eps_hat)) * inv_sqrt_a
    if target > 0 and z is not None:
        out = out + noise_scale * np.asarray(z)
    return out


def posterior_mean_oracle(y0, y_step, step: int, sched: DiffusionSchedule) -> np.ndarray:
    """Mean of q(Y^{s-1} | Y^s, Y^0), written in terms of the clean trajectory."""
    sched.check_step(step)
    a = sched.alpha[step - 1]
    b = sched.beta[step - 1]
    ab = sched.alpha_bar[step]
    ab_prev = sched.alpha_bar[step - 1]
    c_step = np.sqrt(a) * (1.0 - ab_prev) / (1.0 - ab)
    c_clean = np.sqrt(ab_prev) * b / (1.0 - ab)
    return c_step * np.asarray(y_step) + c_clean * np.asarray(y0)


def posterior_mean_from_noise(y_step, noise, step: int, sched: DiffusionSchedule) -> np.ndarray:
    """The same posterior mean written in terms of the forward noise."""
    sched.check_step(step)
    a = sched.alpha[step - 1]
    b = sched.beta[step - 1]
    return (np.asarray(y_step) - b / np.sqrt(1.0 - sched.alpha_bar[step]) * np.asarray(noise)) / np.sqrt(a)


def noise_estimation_loss(noise, eps_hat, axis=None):
    """Frobenius norm of ``noise - eps_hat``; ``axis`` selects per-item norms."""
    noise_arr = noise.data if isinstance(noise, Tensor) else np.asarray(noise)
    eps_shape = eps_hat.shape if isinstance(eps_hat, Tensor) else np.shape(eps_hat)
    if noise_arr.shape != tuple(eps_shape):
        raise ValueError(f"noise shape {noise_arr.shape} != estimate shape {tuple(eps_shape)}")
    diff = as_tensor(noise) - as_tensor(eps_hat)
    if isinstance(noise, Tensor) or isinstance(eps_hat, Tensor):
        return frobenius_norm(diff, axis=axis)
    return np.sqrt(np.sum(diff.data**2, axis=axis))
