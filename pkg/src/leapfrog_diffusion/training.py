"""Two-stage training: the denoiser first, then the leapfrog initializer
against the frozen denoiser."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .data.rng import Generator
from .data.scenes import SceneBatch
from .diffusion import DiffusionSchedule, denoise_step
from .errors import ConfigError, DataError, NumericalError
from .numerics import (
    ContractError,
    ParameterStore,
    Tape,
    Tensor,
    adam_step,
    as_tensor,
    backward,
    frobenius_norm,
    getitem,
    log,
    mean,
    reshape,
    sum,
)
from .models import Context, Denoiser, LeapfrogInitializer

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    stage1_epochs: int = 100
    stage1_lr: float = 1e-3
    stage1_decay_every: int = 16
    stage1_decay: float = 0.5
    stage2_epochs: int = 200
    stage2_lr: float = 1e-4
    stage2_decay_every: int = 32
    stage2_decay: float = 0.9
    distance_weight: float = 50.0
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.stage1_lr <= 0 or self.stage2_lr <= 0:
            raise ConfigError("learning rates must be positive")
        if self.distance_weight < 0:
            raise ConfigError("train.distance_weight must be >= 0")
        if self.batch_size < 1 or self.stage1_decay_every < 1 or self.stage2_decay_every < 1:
            raise ConfigError("batch size and decay intervals must be >= 1")

    def lr(self, stage: int, epoch: int) -> float:
        if stage == 1:
            return self.stage1_lr * self.stage1_decay ** (epoch // self.stage1_decay_every)
        return self.stage2_lr * self.stage2_decay ** (epoch // self.stage2_decay_every)

    def digest(self) -> str:
        return config_hash(asdict(self))


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class TrainReport:
    stage: int
    seed: int
    config_hash: str
    losses: list[float] = field(default_factory=list)
    grad_norms: list[float] = field(default_factory=list)
    wall_clock: list[float] = field(default_factory=list)
    step_losses: list[float] = field(default_factory=list, repr=False)

    def records(self) -> list[dict]:
        return [
            {
                "stage": self.stage,
                "epoch": i,
                "loss": loss,
                "grad_norm": gn,
                "wall_s": wall,
                "seed": self.seed,
                "config_hash": self.config_hash,
            }
            for i, (loss, gn, wall) in enumerate(zip(self.losses, self.grad_norms, self.wall_clock))
        ]


# ---------------------------------------------------------------- losses


def leapfrog_loss(future, predictions, sigma, weight: float) -> Tensor:
    """Best-of-K distance plus the sigma-normalised mean distance and log-variance.

    ``future`` is ``[..., T_f, 2]``, ``predictions`` ``[..., K, T_f, 2]`` and
    ``sigma`` ``[...]``; returns the mean over the leading dimensions.  The
    min routes its gradient to the lowest-index closest sample only.
    """
    predictions = as_tensor(predictions)
    sigma = as_tensor(sigma)
    if np.any(sigma.data <= 0):
        raise ContractError("sigma must be positive")
    future = np.asarray(future.data if isinstance(future, Tensor) else future)
    lead = predictions.shape[:-3]
    K = predictions.shape[-3]
    preds = reshape(predictions, (-1, K) + predictions.shape[-2:])
    fut = future.reshape((-1, 1) + future.shape[-2:])
    sig = reshape(sigma, (-1,))
    dists = frobenius_norm(preds - fut, axis=(2, 3))  # [B, K]
    best = np.argmin(dists.data, axis=1)
    d_min = getitem(dists, (np.arange(dists.shape[0]), best))
    var = sig * sig
    per_item = d_min * weight + sum(dists, axis=1) / (var * float(K)) + log(var)
    loss = mean(per_item)
    return loss if lead else reshape(loss, ())


def _stage_generator(seed: int, stage: int) -> Generator:
    return Generator(seed, stream=f"train-stage{stage}")


def _batches(n: int, batch_size: int, rng: Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


# ---------------------------------------------------------------- stage 1


def stage1_loss(batch: SceneBatch, sched: DiffusionSchedule, denoiser: Denoiser, rng: Generator) -> Tensor:
    """Mean noise-estimation loss on one batch; call under an active tape."""
    if batch.future is None:
        raise DataError("stage-1 training needs scenes with ground-truth futures")
    B = len(batch)
    steps = rng.integers(1, sched.steps + 1, (B,))
    noise = rng.normal(batch.future.shape)
    ab = sched.alpha_bar[steps][:, None, None]
    noisy = np.sqrt(ab) * batch.future + np.sqrt(1.0 - ab) * noise
    ctx = denoiser.context(batch.past, batch.neighbors)
    eps_hat = denoiser.estimate_noise(noisy[:, None], ctx, steps)
    return mean(frobenius_norm(reshape(eps_hat, noise.shape) - noise, axis=(1, 2)))


def stage1_step(batch, sched, denoiser, store: ParameterStore, rng: Generator, lr: float) -> tuple[float, float]:
    store.zero_grad()
    with Tape() as tape:
        loss = stage1_loss(batch, sched, denoiser, rng)
    backward(tape, loss)
    value = loss.item()
    if not np.isfinite(value):
        raise NumericalError(f"non-finite stage-1 loss {value}")
    gn = store.grad_norm()
    _adam(store, lr)
    return value, gn


def _adam(store, lr):
    try:
        adam_step(store, lr)
    except FloatingPointError as exc:
        raise NumericalError(str(exc)) from None


def train_denoiser(
    data: SceneBatch,
    sched: DiffusionSchedule,
    denoiser: Denoiser,
    store: ParameterStore,
    cfg: TrainConfig,
    epochs: int | None = None,
    on_epoch=None,
) -> TrainReport:
    epochs = cfg.stage1_epochs if epochs is None else epochs
    rng = _stage_generator(cfg.seed, 1)
    report = TrainReport(stage=1, seed=cfg.seed, config_hash=cfg.digest())
    for epoch in range(epochs):
        t0 = time.perf_counter()
        lr = cfg.lr(1, epoch)
        losses, norms = [], []
        for idx in _batches(len(data), cfg.batch_size, rng):
            loss, gn = stage1_step(data.take(idx), sched, denoiser, store, rng, lr)
            losses.append(loss)
            norms.append(gn)
        report.step_losses.extend(losses)
        report.losses.append(float(np.mean(losses)))
        report.grad_norms.append(float(np.mean(norms)))
        report.wall_clock.append(time.perf_counter() - t0)
        logger.info("stage1 epoch %d lr %.3g loss %.5f", epoch, lr, report.losses[-1])
        if on_epoch is not None:
            on_epoch(report)
    return report


# ---------------------------------------------------------------- stage 2


def _check_frozen(denoiser_store: ParameterStore) -> None:
    live = [p.name for p in denoiser_store if not p.frozen]
    if live:
        raise ContractError(f"stage 2 needs a frozen denoiser; {len(live)} parameters are trainable (e.g. {live[0]})")


def slice_context(ctx: Context, idx) -> Context:
    return Context(vector=Tensor(ctx.vector.data[idx]), projected=Tensor(ctx.projected.data[idx]))


def stage2_loss(
    batch: SceneBatch,
    tau: int,
    sched: DiffusionSchedule,
    denoiser: Denoiser,
    initializer: LeapfrogInitializer,
    weight: float,
    rng: Generator,
    context: Context | None = None,
) -> Tensor:
    """Leapfrog loss after ``tau`` differentiated denoising steps; call under a tape."""
    if batch.future is None:
        raise DataError("stage-2 training needs scenes with ground-truth futures")
    if not 0 <= tau <= sched.steps:
        raise ConfigError(f"tau={tau} outside [0, {sched.steps}]")
    if context is None:
        context = _no_grad_context(denoiser, batch)
    out = initializer(batch.past, batch.neighbors)
    y = out.y_tau
    for s in range(tau, 0, -1):
        eps_hat = denoiser.estimate_noise(y, context, s)
        z = rng.normal(y.shape) if s > 1 else None
        y = denoise_step(y, eps_hat, z, s - 1, sched)
    return leapfrog_loss(batch.future, y, out.sigma, weight)


def _no_grad_context(denoiser: Denoiser, batch: SceneBatch) -> Context:
    # frozen parameters do not require grad, so nothing is recorded
    return denoiser.context(batch.past, batch.neighbors)


def stage2_step(
    batch,
    tau,
    sched,
    denoiser,
    denoiser_store: ParameterStore,
    initializer,
    init_store: ParameterStore,
    weight: float,
    rng: Generator,
    lr: float,
    context: Context | None = None,
) -> tuple[float, float]:
    _check_frozen(denoiser_store)
    init_store.zero_grad()
    with Tape() as tape:
        loss = stage2_loss(batch, tau, sched, denoiser, initializer, weight, rng, context)
    backward(tape, loss)
    value = loss.item()
    if not np.isfinite(value):
        raise NumericalError(f"non-finite stage-2 loss {value}")
    gn = init_store.grad_norm()
    _adam(init_store, lr)
    return value, gn


def train_initializer(
    data: SceneBatch,
    tau: int,
    sched: DiffusionSchedule,
    denoiser: Denoiser,
    denoiser_store: ParameterStore,
    initializer: LeapfrogInitializer,
    init_store: ParameterStore,
    cfg: TrainConfig,
    epochs: int | None = None,
    on_epoch=None,
) -> TrainReport:
    _check_frozen(denoiser_store)
    epochs = cfg.stage2_epochs if epochs is None else epochs
    rng = _stage_generator(cfg.seed, 2)
    report = TrainReport(stage=2, seed=cfg.seed, config_hash=cfg.digest())
    # the frozen denoiser's context never changes, so encode every scene once
    context = _no_grad_context(denoiser, data)
    for epoch in range(epochs):
        t0 = time.perf_counter()
        lr = cfg.lr(2, epoch)
        losses, norms = [], []
        for idx in _batches(len(data), cfg.batch_size, rng):
            loss, gn = stage2_step(
                data.take(idx),
                tau,
                sched,
                denoiser,
                denoiser_store,
                initializer,
                init_store,
                cfg.distance_weight,
                rng,
                lr,
                slice_context(context, idx),
            )
            losses.append(loss)
            norms.append(gn)
        report.step_losses.extend(losses)
        report.losses.append(float(np.mean(losses)))
        report.grad_norms.append(float(np.mean(norms)))
        report.wall_clock.append(time.perf_counter() - t0)
        logger.info("stage2 epoch %d lr %.3g loss %.5f", epoch, lr, report.losses[-1])
        if on_epoch is not None:
            on_epoch(report)
    return report
