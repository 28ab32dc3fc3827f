"""Best-of-K metrics, mode coverage and the sampler benchmark."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data.scenes import SceneSet
from .errors import ConfigError, DataError

HORIZON_FRACS = (0.25, 0.5, 0.75, 1.0)
REPORT_HEADER = ["sampler", "K", "horizon_frac", "min_ade", "min_fde", "coverage", "calls", "wall_ns_mean"]


def _check(preds, future, horizon):
    preds = np.asarray(preds, dtype=np.float64)
    future = np.asarray(future, dtype=np.float64)
    if preds.ndim < 3 or preds.shape[-1] != 2:
        raise DataError(f"predictions must be [..., K, T_f, 2], got {preds.shape}")
    T_f = preds.shape[-2]
    if future.shape[-2:] != (T_f, 2) or future.shape[:-2] != preds.shape[:-3]:
        raise DataError(f"ground truth {future.shape} does not match predictions {preds.shape}")
    t_h = T_f if horizon is None else int(horizon)
    if not 1 <= t_h <= T_f:
        raise ValueError(f"horizon {t_h} outside [1, {T_f}]")
    return preds, future, t_h


def _step_dists(preds, future, t_h):
    diff = preds[..., :t_h, :] - future[..., None, :t_h, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))  # [..., K, t_h]


def min_ade(preds, future, horizon: int | None = None):
    """``min_k mean_{t <= t_h} |pred[k, t] - Y[t]|``; leading batch dims are kept."""
    preds, future, t_h = _check(preds, future, horizon)
    out = np.min(np.mean(_step_dists(preds, future, t_h), axis=-1), axis=-1)
    return float(out) if out.ndim == 0 else out


def min_fde(preds, future, horizon: int | None = None):
    """``min_k |pred[k, t_h] - Y[t_h]|`` with ``t_h`` 1-indexed."""
    preds, future, t_h = _check(preds, future, horizon)
    d = _step_dists(preds[..., t_h - 1 : t_h, :], future[..., t_h - 1 : t_h, :], 1)[..., 0]
    out = np.min(d, axis=-1)
    return float(out) if out.ndim == 0 else out


def mode_coverage(preds, endpoints, threshold: float = 1.0) -> float:
    """Fraction of reference mode endpoints ``[M, 2]`` with a predicted
    endpoint within ``threshold``."""
    preds = np.asarray(preds, dtype=np.float64)
    endpoints = np.asarray(endpoints, dtype=np.float64)
    if endpoints.ndim != 2 or endpoints.shape[1] != 2 or len(endpoints) == 0:
        raise DataError(f"mode endpoints must be [M, 2], got {endpoints.shape}")
    ends = preds[:, -1, :]
    d = np.linalg.norm(ends[:, None, :] - endpoints[None, :, :], axis=-1)
    return float(np.mean(np.any(d <= threshold, axis=0)))


def mean_mode_coverage(preds, scenes: SceneSet, threshold: float = 1.0) -> float:
    """Mean per-scene coverage; preds ``[N, K, T_f, 2]`` aligned with ``scenes``."""
    if len(preds) != len(scenes):
        raise DataError(f"{len(preds)} prediction sets for {len(scenes)} scenes")
    total = 0.0
    for p, s in zip(preds, scenes):
        if "mode_endpoints" not in s.meta:
            raise DataError(f"scene {s.scene_id} has no mode metadata")
        total += mode_coverage(p, s.meta["mode_endpoints"], threshold)
    return total / len(scenes)


def horizons(t_future: int, fracs=HORIZON_FRACS) -> list[int]:
    return [max(1, int(round(f * t_future))) for f in fracs]


@dataclass
class MetricReport:
    sampler_id: str
    K: int
    horizon_fracs: list[float]
    min_ade: list[float]
    min_fde: list[float]
    coverage: float | None
    calls: int
    wall_ns_mean: float
    n_scenes: int
    seed: int
    tau: int | None = None
    extras: dict = field(default_factory=dict)

    def rows(self) -> list[dict]:
        cov = "" if self.coverage is None else self.coverage
        return [
            {
                "sampler": self.sampler_id,
                "K": self.K,
                "horizon_frac": f,
                "min_ade": a,
                "min_fde": d,
                "coverage": cov,
                "calls": self.calls,
                "wall_ns_mean": self.wall_ns_mean,
            }
            for f, a, d in zip(self.horizon_fracs, self.min_ade, self.min_fde)
        ]

    @property
    def final_ade(self) -> float:
        return self.min_ade[-1]


def evaluate(prediction, scenes: SceneSet, threshold: float = 1.0, fracs=HORIZON_FRACS, label: str | None = None) -> MetricReport:
    """Metrics for a :class:`BatchPrediction` against the scenes it was drawn for."""
    if not scenes.has_futures:
        raise DataError("evaluation needs ground-truth futures")
    if list(np.asarray(prediction.ids)) != scenes.ids:
        raise DataError("prediction scene ids do not match the evaluation set")
    future = np.stack([s.future for s in scenes])
    preds = prediction.trajectories
    hs = horizons(preds.shape[-2], fracs)
    ade = [float(np.mean(min_ade(preds, future, h))) for h in hs]
    fde = [float(np.mean(min_fde(preds, future, h))) for h in hs]
    cov = None
    if all("mode_endpoints" in s.meta for s in scenes):
        cov = mean_mode_coverage(preds, scenes, threshold)
    return MetricReport(
        sampler_id=label or prediction.sampler_id,
        K=preds.shape[1],
        horizon_fracs=list(fracs),
        min_ade=ade,
        min_fde=fde,
        coverage=cov,
        calls=prediction.denoiser_calls,
        wall_ns_mean=prediction.wall_clock_ns / len(scenes),
        n_scenes=len(scenes),
        seed=prediction.seed,
    )


def benchmark(estimator, scenes: SceneSet, samplers, K: int | None = None, seeds=(0,), threshold: float = 1.0) -> list[MetricReport]:
    """Run each sampler spec over ``scenes`` for every seed.

    A spec is a dict with ``sampler`` (``standard``, ``leapfrog``, ``iid``),
    optional ``tau``, optional ``label`` and, for leapfrog, an optional
    ``estimator`` carrying a differently trained initializer.  Metrics are
    averaged over seeds; timing is the mean per scene.
    """
    reports = []
    for spec in samplers:
        spec = {"sampler": spec} if isinstance(spec, str) else dict(spec)
        name = spec["sampler"]
        est = spec.get("estimator", estimator)
        if name not in ("standard", "leapfrog", "iid"):
            raise ConfigError(f"unknown sampler {name!r}")
        tau = spec.get("tau")
        label = spec.get("label") or (name if tau is None or name == "standard" else f"{name}-tau{tau}")
        runs = []
        for seed in seeds:
            pred = est.sample(scenes, sampler=name, tau=tau, K=K, seed=seed)
            runs.append(evaluate(pred, scenes, threshold, label=label))
        rep = runs[0]
        if len(runs) > 1:
            rep.min_ade = list(np.mean([r.min_ade for r in runs], axis=0))
            rep.min_fde = list(np.mean([r.min_fde for r in runs], axis=0))
            if rep.coverage is not None:
                rep.coverage = float(np.mean([r.coverage for r in runs]))
            rep.wall_ns_mean = float(np.mean([r.wall_ns_mean for r in runs]))
        rep.tau = est.diffusion_steps if name == "standard" else tau
        reports.append(rep)
    return reports


def write_report(reports: list[MetricReport], path, header_lines: list[str] | None = None, include_timing: bool = True) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        for line in header_lines or []:
            fh.write(f"# {line}\n")
        w = csv.DictWriter(fh, fieldnames=REPORT_HEADER, lineterminator="\n")
        w.writeheader()
        for rep in reports:
            for row in rep.rows():
                if not include_timing:
                    row["wall_ns_mean"] = ""
                w.writerow({k: _fmt(v) for k, v in row.items()})


def _fmt(v):
    return format(v, ".17g") if isinstance(v, float) else v


def read_report(path) -> list[dict]:
    """Rows of a report CSV with numeric columns parsed (empty cells are None)."""
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    if reader.fieldnames != REPORT_HEADER:
        raise DataError(f"report header {reader.fieldnames} != {REPORT_HEADER}")
    for row in reader:
        parsed = {"sampler": row["sampler"], "K": int(row["K"]), "calls": int(row["calls"])}
        for k in ("horizon_frac", "min_ade", "min_fde", "coverage", "wall_ns_mean"):
            parsed[k] = float(row[k]) if row[k] != "" else None
        out.append(parsed)
    return out
