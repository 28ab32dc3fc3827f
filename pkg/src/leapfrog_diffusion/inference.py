"""Standard full-chain sampling and leapfrog sampling.

Both samplers batch the K chains of a scene into one network call per
denoising step, so ``denoiser_calls`` counts network forward passes: the
standard chain makes ``Γ`` of them per scene and the leapfrog sampler ``τ``.
Noise comes from per-scene counter streams keyed by ``(seed, scene_id)``, so
a scene's samples do not depend on which other scenes share its batch.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data.rng import BatchGenerator, batch_for
from .data.scenes import SceneBatch
from .diffusion import DiffusionSchedule, denoise_step
from .errors import ConfigError, DataError, NumericalError
from .models import Context, Denoiser, LeapfrogInitializer

SAMPLERS = ("standard", "leapfrog", "iid")
PREDICTION_HEADER = ["scene_id", "k", "t", "x", "y"]


@dataclass
class PredictionSet:
    trajectories: np.ndarray  # [K, T_f, 2]
    sampler_id: str
    denoiser_calls: int
    seed: int
    wall_clock_ns: int
    scene_id: int = 0
    extras: dict = field(default_factory=dict, repr=False)


@dataclass
class BatchPrediction:
    """Samples for a batch of scenes; ``wall_clock_ns`` is the batch total."""

    trajectories: np.ndarray  # [N, K, T_f, 2]
    ids: np.ndarray
    sampler_id: str
    denoiser_calls: int  # per scene
    seed: int
    wall_clock_ns: int
    extras: dict = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return self.trajectories.shape[0]

    def sets(self) -> list[PredictionSet]:
        n = len(self)
        per_scene = self.wall_clock_ns // max(n, 1)
        return [
            PredictionSet(
                trajectories=self.trajectories[i],
                sampler_id=self.sampler_id,
                denoiser_calls=self.denoiser_calls,
                seed=self.seed,
                wall_clock_ns=per_scene,
                scene_id=int(self.ids[i]),
                extras={k: v[i] for k, v in self.extras.items()},
            )
            for i in range(n)
        ]

    @classmethod
    def concat(cls, parts: list["BatchPrediction"]) -> "BatchPrediction":
        first = parts[0]
        keys = first.extras.keys()
        return cls(
            trajectories=np.concatenate([p.trajectories for p in parts]),
            ids=np.concatenate([p.ids for p in parts]),
            sampler_id=first.sampler_id,
            denoiser_calls=first.denoiser_calls,
            seed=first.seed,
            wall_clock_ns=int(np.sum([p.wall_clock_ns for p in parts])),
            extras={k: np.concatenate([p.extras[k] for p in parts]) for k in keys},
        )


def _noise_streams(seed: int, sampler: str, ids) -> BatchGenerator:
    return batch_for(seed, f"sample-{sampler}", np.asarray(ids))


def _check_finite(y: np.ndarray, step: int, sampler: str) -> None:
    if not np.all(np.isfinite(y)):
        raise NumericalError(f"{sampler} sampler produced non-finite values at step {step}")


def _denoise_chain(
    y: np.ndarray,
    start: int,
    context: Context,
    denoiser: Denoiser,
    sched: DiffusionSchedule,
    rng: BatchGenerator,
    sampler: str,
) -> tuple[np.ndarray, int]:
    """Run steps ``start .. 1``; z is drawn for every step but the last."""
    calls = 0
    for s in range(start, 0, -1):
        eps_hat = denoiser.estimate_noise(y, context, s).data
        calls += 1
        z = rng.normal(y.shape[1:]) if s > 1 else None
        y = denoise_step(y, eps_hat, z, s - 1, sched)
        _check_finite(y, s, sampler)
    return y, calls


def sample_standard(
    batch: SceneBatch,
    K: int,
    sched: DiffusionSchedule,
    denoiser: Denoiser,
    seed: int = 0,
    steps: int | None = None,
) -> BatchPrediction:
    """K independent chains from ``N(0, I)`` through all ``Γ`` steps.

    ``steps`` < Γ starts from N(0, I) at that step instead (the i.i.d.
    truncated baseline).
    """
    if K < 1:
        raise ConfigError(f"K must be >= 1, got {K}")
    start = sched.steps if steps is None else int(steps)
    if not 0 <= start <= sched.steps:
        raise ConfigError(f"steps={start} outside [0, {sched.steps}]")
    sampler = "standard" if start == sched.steps else "iid"
    t0 = time.perf_counter_ns()
    rng = _noise_streams(seed, sampler, batch.ids)
    T_f = denoiser.cfg.t_future
    y = rng.normal((K, T_f, 2))
    context = denoiser.context(batch.past, batch.neighbors)
    y, calls = _denoise_chain(y, start, context, denoiser, sched, rng, sampler)
    return BatchPrediction(y, np.asarray(batch.ids), sampler, calls, seed, time.perf_counter_ns() - t0)


def sample_iid(batch, K, tau, sched, denoiser, seed=0) -> BatchPrediction:
    """Compute-matched baseline: K i.i.d. normal draws denoised for ``tau`` steps."""
    return sample_standard(batch, K, sched, denoiser, seed=seed, steps=tau)


def sample_leapfrog(
    batch: SceneBatch,
    tau: int,
    sched: DiffusionSchedule,
    initializer: LeapfrogInitializer,
    denoiser: Denoiser,
    seed: int = 0,
) -> BatchPrediction:
    """Initializer output at step ``tau``, then ``tau`` stochastic denoising steps."""
    if not 0 <= tau <= sched.steps:
        raise ConfigError(f"tau={tau} outside [0, {sched.steps}]")
    if initializer.cfg.t_future != denoiser.cfg.t_future:
        raise ConfigError("initializer and denoiser disagree on the future length")
    t0 = time.perf_counter_ns()
    rng = _noise_streams(seed, "leapfrog", batch.ids)
    out = initializer(batch.past, batch.neighbors)
    y = out.y_tau.data
    _check_finite(y, tau, "leapfrog")
    calls = 0
    if tau > 0:
        context = denoiser.context(batch.past, batch.neighbors)
        y, calls = _denoise_chain(y, tau, context, denoiser, sched, rng, "leapfrog")
    extras = {"mean": out.mean.data, "sigma": out.sigma.data, "samples": out.samples.data}
    return BatchPrediction(y, np.asarray(batch.ids), "leapfrog", calls, seed, time.perf_counter_ns() - t0, extras)


def iter_chunks(batch: SceneBatch, chunk: int):
    for start in range(0, len(batch), chunk):
        yield batch.take(np.arange(start, min(start + chunk, len(batch))))


# ---------------------------------------------------------------- files


def write_predictions(pred: BatchPrediction, path, header_lines: list[str] | None = None) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        for line in header_lines or []:
            fh.write(f"# {line}\n")
        fh.write(f"# sampler={pred.sampler_id} calls_per_scene={pred.denoiser_calls} seed={pred.seed}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PREDICTION_HEADER)
        N, K, T = pred.trajectories.shape[:3]
        for i in range(N):
            sid = int(pred.ids[i])
            for k in range(K):
                for t in range(T):
                    x, y = pred.trajectories[i, k, t]
                    w.writerow([sid, k, t, format(float(x), ".17g"), format(float(y), ".17g")])


def read_predictions(path) -> tuple[np.ndarray, np.ndarray]:
    """Returns ``(ids [N], trajectories [N, K, T_f, 2])``."""
    rows: dict[int, dict[tuple[int, int], tuple[float, float]]] = {}
    header_seen = False
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if not header_seen:
                if parts != PREDICTION_HEADER:
                    raise DataError(f"line {lineno}: expected header {','.join(PREDICTION_HEADER)}")
                header_seen = True
                continue
            if len(parts) != 5:
                raise DataError(f"line {lineno}: expected 5 fields, got {len(parts)}")
            try:
                sid, k, t = int(parts[0]), int(parts[1]), int(parts[2])
                rows.setdefault(sid, {})[(k, t)] = (float(parts[3]), float(parts[4]))
            except ValueError:
                raise DataError(f"line {lineno}: malformed value") from None
    if not header_seen:
        raise DataError("prediction file has no header")
    ids = np.array(sorted(rows), dtype=np.int64)
    if len(ids) == 0:
        return ids, np.zeros((0, 0, 0, 2))
    first = rows[int(ids[0])]
    K = 1 + max(k for k, _ in first)
    T = 1 + max(t for _, t in first)
    out = np.empty((len(ids), K, T, 2))
    for i, sid in enumerate(ids):
        cells = rows[int(sid)]
        if len(cells) != K * T:
            raise DataError(f"scene {sid}: expected {K * T} rows, got {len(cells)}")
        for (k, t), xy in cells.items():
            out[i, k, t] = xy
    return ids, out
