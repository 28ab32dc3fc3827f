"""Scikit-learn style estimator over the two-stage leapfrog pipeline."""

from __future__ import annotations

import logging
from dataclasses import fields

import numpy as np
from sklearn.base import BaseEstimator

from . import __version__
from .data.normalize import SceneNormalizer
from .data.rng import Generator
from .data.scenes import SceneBatch, SceneSet, check_scenes, stack_scenes
from .diffusion import DiffusionSchedule, make_schedule
from .errors import ConfigError, DataError
from .inference import BatchPrediction, iter_chunks, sample_iid, sample_leapfrog, sample_standard
from .models import Denoiser, EncoderConfig, LeapfrogInitializer
from .numerics import ParameterStore, load_checkpoint, save_checkpoint
from .training import TrainConfig, TrainReport, config_hash, train_denoiser, train_initializer

logger = logging.getLogger(__name__)

_TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"seed"}
_MODEL_KEYS = {f.name for f in fields(EncoderConfig)} - {"t_past", "t_future", "n_samples"}


def _as_batch(X, require_future: bool = False) -> tuple[SceneSet, SceneBatch]:
    if isinstance(X, SceneBatch):
        if require_future and X.future is None:
            raise DataError("scenes need ground-truth futures")
        return None, X
    scene_set = check_scenes(X, require_future=require_future)
    return scene_set, stack_scenes(scene_set)


class LeapfrogDiffusion(BaseEstimator):
    """Multimodal trajectory predictor: a diffusion denoiser plus a leapfrog
    initializer that skips all but the last ``tau`` denoising steps.

    ``fit`` runs both training stages.  ``predict`` returns world-frame
    samples ``[N, K, T_f, 2]``; ``sample`` returns the full
    :class:`BatchPrediction` with call counts and timing.

    ``model`` and ``train`` take dicts of overrides for
    :class:`EncoderConfig` and :class:`TrainConfig`.  With ``warm_start``,
    ``fit_initializer`` continues from the current initializer (for instance
    one trained at another tau) instead of a fresh one.
    """

    def __init__(
        self,
        n_samples: int = 20,
        tau: int = 5,
        diffusion_steps: int = 100,
        beta_start: float = 1e-4,
        beta_end: float = 5e-2,
        schedule: str = "linear",
        model: dict | None = None,
        train: dict | None = None,
        rotate: bool = True,
        norm_scale: float | None = 1.0,
        seed: int = 0,
        chunk_size: int = 500,
        warm_start: bool = False,
    ):
        self.n_samples = n_samples
        self.tau = tau
        self.diffusion_steps = diffusion_steps
        self.beta_start = beta_start
        self.beta_end = beta_end
        self.schedule = schedule
        self.model = model
        self.train = train
        self.rotate = rotate
        self.norm_scale = norm_scale
        self.seed = seed
        self.chunk_size = chunk_size
        self.warm_start = warm_start

    # ------------------------------------------------------------ configs

    def build_schedule(self) -> DiffusionSchedule:
        return make_schedule(self.schedule, self.beta_start, self.beta_end, self.diffusion_steps)

    def train_config(self) -> TrainConfig:
        overrides = dict(self.train or {})
        unknown = set(overrides) - _TRAIN_KEYS
        if unknown:
            raise ConfigError(f"unknown train settings: {sorted(unknown)}")
        return TrainConfig(seed=self.seed, **overrides)

    def model_config(self, t_past: int, t_future: int, n_samples: int | None = None) -> EncoderConfig:
        overrides = dict(self.model or {})
        unknown = set(overrides) - _MODEL_KEYS
        if unknown:
            raise ConfigError(f"unknown model settings: {sorted(unknown)}")
        K = self.n_samples if n_samples is None else n_samples
        return EncoderConfig(t_past=t_past, t_future=t_future, n_samples=K, **overrides)

    def _check_tau(self, tau: int) -> int:
        tau = int(tau)
        if not 0 <= tau <= self.diffusion_steps:
            raise ConfigError(f"tau={tau} outside [0, {self.diffusion_steps}]")
        return tau

    def _check_fitted(self, what: str = "denoiser") -> None:
        if not hasattr(self, f"{what}_"):
            raise DataError(f"the {what} is not trained or loaded")

    # ------------------------------------------------------------ training

    def fit(self, X, y=None):
        """Stage 1 (denoiser) then stage 2 (initializer)."""
        self.fit_denoiser(X)
        self.fit_initializer(X)
        return self

    def fit_denoiser(self, X, epochs: int | None = None, on_epoch=None):
        _, batch = _as_batch(X, require_future=True)
        self.sched_ = self.build_schedule()
        cfg = self.train_config()
        if self.norm_scale is not None and not self.norm_scale > 0:
            raise ConfigError(f"norm_scale must be positive, got {self.norm_scale}")
        self.normalizer_ = SceneNormalizer(rotate=self.rotate, scale=self.norm_scale).fit(batch)
        local = self.normalizer_.transform(batch)
        self.model_cfg_ = self.model_config(batch.past.shape[1], batch.future.shape[1])
        self.denoiser_store_ = ParameterStore()
        self.denoiser_ = Denoiser(
            self.denoiser_store_, self.model_cfg_, rng=Generator(self.seed, "init-denoiser"), max_step=self.sched_.steps
        )
        self.stage1_report_ = train_denoiser(
            local, self.sched_, self.denoiser_, self.denoiser_store_, cfg, epochs=epochs, on_epoch=on_epoch
        )
        self.denoiser_store_.freeze()
        for attr in ("initializer_", "init_store_", "stage2_report_"):
            self.__dict__.pop(attr, None)
        return self

    def fit_initializer(self, X, tau: int | None = None, epochs: int | None = None, on_epoch=None):
        self._check_fitted("denoiser")
        _, batch = _as_batch(X, require_future=True)
        tau = self._check_tau(self.tau if tau is None else tau)
        self.denoiser_store_.freeze()
        local = self.normalizer_.transform(batch)
        cfg = self.model_config(self.model_cfg_.t_past, self.model_cfg_.t_future)
        if self.warm_start and getattr(self, "init_cfg_", None) == cfg:
            logger.info("warm start from the tau=%d initializer", self.trained_tau_)
        else:
            self.init_cfg_ = cfg
            self.init_store_ = ParameterStore()
            self.initializer_ = LeapfrogInitializer(self.init_store_, cfg, rng=Generator(self.seed, "init-leapfrog"))
        self.trained_tau_ = tau
        self.stage2_report_: TrainReport = train_initializer(
            local,
            tau,
            self.sched_,
            self.denoiser_,
            self.denoiser_store_,
            self.initializer_,
            self.init_store_,
            self.train_config(),
            epochs=epochs,
            on_epoch=on_epoch,
        )
        return self

    # ------------------------------------------------------------ inference

    def sample(self, X, sampler: str = "leapfrog", tau: int | None = None, K: int | None = None, seed: int | None = None) -> BatchPrediction:
        """World-frame samples for every scene in ``X``.

        ``sampler`` is ``"leapfrog"``, ``"standard"`` (full chain) or ``"iid"``
        (normal draws denoised for ``tau`` steps).  ``K`` applies to the
        chain samplers; the leapfrog K is fixed by the trained initializer.
        """
        self._check_fitted("denoiser")
        _, batch = _as_batch(X)
        if batch.past.shape[1] != self.model_cfg_.t_past:
            raise DataError(f"scenes have T_p={batch.past.shape[1]}, model expects {self.model_cfg_.t_past}")
        seed = self.seed if seed is None else seed
        if sampler == "leapfrog":
            self._check_fitted("initializer")
        tau = self._check_tau(getattr(self, "trained_tau_", self.tau) if tau is None else tau)
        K = self.n_samples if K is None else int(K)
        parts = []
        for chunk in iter_chunks(batch, self.chunk_size):
            local = self.normalizer_.transform(chunk)
            if sampler == "leapfrog":
                part = sample_leapfrog(local, tau, self.sched_, self.initializer_, self.denoiser_, seed=seed)
            elif sampler == "standard":
                part = sample_standard(local, K, self.sched_, self.denoiser_, seed=seed)
            elif sampler == "iid":
                part = sample_iid(local, K, tau, self.sched_, self.denoiser_, seed=seed)
            else:
                raise ConfigError(f"unknown sampler {sampler!r}")
            part.trajectories = self.normalizer_.inverse_transform(part.trajectories, chunk.past)
            parts.append(part)
        return BatchPrediction.concat(parts)

    def predict(self, X, sampler: str = "leapfrog", **kwargs) -> np.ndarray:
        return self.sample(X, sampler=sampler, **kwargs).trajectories

    def score(self, X, y=None, sampler: str = "leapfrog") -> float:
        """Negative minADE over the full horizon (higher is better)."""
        from .eval import min_ade

        _, batch = _as_batch(X, require_future=True)
        preds = self.predict(batch, sampler=sampler)
        return -float(np.mean(min_ade(preds, batch.future)))

    # ------------------------------------------------------------ persistence

    def _meta(self, kind: str) -> dict:
        meta = {
            "kind": kind,
            "version": __version__,
            "seed": self.seed,
            "diffusion": {
                "schedule": self.schedule,
                "steps": self.diffusion_steps,
                "beta_start": self.beta_start,
                "beta_end": self.beta_end,
            },
            "normalizer": {"rotate": self.normalizer_.rotate, "scale": self.normalizer_.scale_},
        }
        if kind == "denoiser":
            meta["model"] = self.model_cfg_.as_dict()
        else:
            meta["model"] = self.init_cfg_.as_dict()
            meta["tau"] = self.trained_tau_
        meta["config_hash"] = config_hash(meta)
        return meta

    def save_denoiser(self, path) -> None:
        self._check_fitted("denoiser")
        save_checkpoint(self.denoiser_store_, path, self._meta("denoiser"))

    def save_initializer(self, path) -> None:
        self._check_fitted("initializer")
        save_checkpoint(self.init_store_, path, self._meta("initializer"))

    def load_denoiser(self, path):
        store, meta = load_checkpoint(path)
        if meta.get("kind") != "denoiser":
            raise DataError(f"{path} is not a denoiser checkpoint")
        d = meta["diffusion"]
        self.schedule, self.diffusion_steps = d["schedule"], d["steps"]
        self.beta_start, self.beta_end = d["beta_start"], d["beta_end"]
        self.sched_ = self.build_schedule()
        self.normalizer_ = SceneNormalizer(rotate=meta["normalizer"]["rotate"], scale=meta["normalizer"]["scale"])
        self.normalizer_.fit(None)
        self.rotate = self.normalizer_.rotate
        self.model_cfg_ = EncoderConfig(**meta["model"])
        self.denoiser_store_ = store
        self.denoiser_ = Denoiser(store, self.model_cfg_, max_step=self.sched_.steps)
        store.freeze()
        return self

    def load_initializer(self, path):
        self._check_fitted("denoiser")
        store, meta = load_checkpoint(path)
        if meta.get("kind") != "initializer":
            raise DataError(f"{path} is not an initializer checkpoint")
        if meta["diffusion"]["steps"] != self.diffusion_steps:
            raise DataError("initializer and denoiser checkpoints use different schedules")
        self.init_cfg_ = EncoderConfig(**meta["model"])
        self.init_store_ = store
        self.initializer_ = LeapfrogInitializer(store, self.init_cfg_)
        self.trained_tau_ = int(meta["tau"])
        self.n_samples = self.init_cfg_.n_samples
        return self
