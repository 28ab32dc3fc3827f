"""Seeded multi-agent scenes whose ego future has several intent modes.

Each agent moves with near-constant velocity, perturbed by Gaussian
accelerations and a capped inverse-distance repulsion from the other agents.
When the future starts, the ego picks one of ``n_modes`` intents; intent ``m``
turns its heading by ``mode_angles[m]`` radians spread evenly over the future
steps.  The noiseless endpoint of every intent is stored with the scene so
mode coverage can be scored later.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError
from .rng import Generator
from .scenes import SceneSet, TrajectoryScene


@dataclass
class GenConfig:
    n_scenes: int = 1000
    t_past: int = 8
    t_future: int = 12
    n_neighbors: int = 4
    n_modes: int = 2
    mode_weights: tuple | None = None
    turn_angle: float = 0.8
    mode_angles: tuple | None = None
    speed_min: float = 0.4
    speed_max: float = 0.8
    accel_std: float = 0.02
    repulsion: float = 0.05
    repulsion_cap: float = 0.1
    spawn_radius: float = 4.0
    seed: int = 0
    extra: dict = field(default_factory=dict, repr=False)

    def weights(self) -> np.ndarray:
        if self.mode_weights is None:
            return np.full(self.n_modes, 1.0 / self.n_modes)
        return np.asarray(self.mode_weights, dtype=np.float64)

    def angles(self) -> np.ndarray:
        if self.mode_angles is not None:
            return np.asarray(self.mode_angles, dtype=np.float64)
        if self.n_modes == 1:
            return np.zeros(1)
        return np.linspace(-self.turn_angle, self.turn_angle, self.n_modes)

    def validate(self) -> None:
        if self.n_modes < 1:
            raise ConfigError(f"n_modes must be >= 1, got {self.n_modes}")
        w = self.weights()
        if w.shape != (self.n_modes,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ConfigError(f"mode weights {w.tolist()} must be {self.n_modes} non-negative values summing to 1")
        if self.angles().shape != (self.n_modes,):
            raise ConfigError("mode_angles must have one entry per mode")
        if min(self.t_past, self.t_future) < 1 or self.n_neighbors < 0 or self.n_scenes < 0:
            raise ConfigError("t_past, t_future must be >= 1 and n_neighbors, n_scenes >= 0")
        if not 0 <= self.speed_min <= self.speed_max:
            raise ConfigError("speed range must satisfy 0 <= speed_min <= speed_max")
        if self.t_past < 2:
            raise ConfigError("t_past must be >= 2 so a heading is observable")

    def as_dict(self) -> dict:
        d = asdict(self)
        d.pop("extra")
        d["mode_weights"] = self.weights().tolist()
        d["mode_angles"] = self.angles().tolist()
        return d


def _rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def _repulsion(pos: np.ndarray, gain: float, cap: float) -> np.ndarray:
    diff = pos[:, None, :] - pos[None, :, :]
    d2 = np.sum(diff * diff, axis=-1)
    np.fill_diagonal(d2, np.inf)
    # coincident agents exert no force: the direction is undefined
    inv = np.where(d2 > 0, 1.0 / np.where(d2 > 0, d2, 1.0), 0.0)
    force = gain * np.sum(diff * inv[..., None], axis=1)
    mag = np.linalg.norm(force, axis=-1, keepdims=True)
    scale = np.where(mag > cap, cap / np.where(mag > 0, mag, 1.0), 1.0)
    return force * scale


def _simulate_scene(cfg: GenConfig, index: int, weights: np.ndarray, angles: np.ndarray) -> TrajectoryScene:
    rng = Generator(cfg.seed, stream=index)
    n_agents = 1 + cfg.n_neighbors
    T = cfg.t_past + cfg.t_future

    pos = np.empty((n_agents, 2))
    pos[0] = rng.uniform(-5.0, 5.0, (2,))
    if cfg.n_neighbors:
        radius = cfg.spawn_radius * np.sqrt(rng.random((cfg.n_neighbors,)))
        phi = 2.0 * np.pi * rng.random((cfg.n_neighbors,))
        pos[1:] = pos[0] + np.stack([radius * np.cos(phi), radius * np.sin(phi)], axis=-1)
    heading = 2.0 * np.pi * rng.random((n_agents,))
    speed = rng.uniform(cfg.speed_min, cfg.speed_max, (n_agents,))
    vel = np.stack([speed * np.cos(heading), speed * np.sin(heading)], axis=-1)
    mode = rng.choice(cfg.n_modes, weights)
    turn = _rotation(angles[mode] / cfg.t_future)

    traj = np.empty((n_agents, T, 2))
    traj[:, 0] = pos
    ref_pos = ref_vel = None
    for t in range(1, T):
        if t == cfg.t_past:
            ref_pos, ref_vel = pos[0].copy(), vel[0].copy()
            vel[0] = turn @ vel[0]
        elif t > cfg.t_past:
            vel[0] = turn @ vel[0]
        accel = cfg.accel_std * rng.normal((n_agents, 2))
        if cfg.repulsion > 0 and n_agents > 1:
            accel = accel + _repulsion(pos, cfg.repulsion, cfg.repulsion_cap)
        vel = vel + accel
        pos = pos + vel
        traj[:, t] = pos

    endpoints = np.empty((cfg.n_modes, 2))
    for m in range(cfg.n_modes):
        rot = _rotation(angles[m] / cfg.t_future)
        p, v = ref_pos.copy(), ref_vel.copy()
        for _ in range(cfg.t_future):
            v = rot @ v
            p = p + v
        endpoints[m] = p

    return TrajectoryScene(
        past=traj[0, : cfg.t_past],
        neighbors=traj[1:, : cfg.t_past],
        future=traj[0, cfg.t_past :],
        scene_id=index,
        meta={"mode": int(mode), "mode_endpoints": endpoints},
    )


def generate_synthetic(cfg: GenConfig) -> SceneSet:
    cfg.validate()
    weights, angles = cfg.weights(), cfg.angles()
    scenes = [_simulate_scene(cfg, i, weights, angles) for i in range(cfg.n_scenes)]
    return SceneSet(
        scenes=scenes,
        t_past=cfg.t_past,
        t_future=cfg.t_future,
        n_neighbors=cfg.n_neighbors,
        metadata={"generator": cfg.as_dict(), "seed": cfg.seed, "n_modes": cfg.n_modes},
    )


def split(scene_set: SceneSet, train_frac: float, seed: int = 0) -> tuple[SceneSet, SceneSet]:
    """Seeded shuffle, then the first ``round(train_frac * n)`` scenes train."""
    if not 0.0 < train_frac < 1.0:
        raise ConfigError(f"train_frac must lie in (0, 1), got {train_frac}")
    order = Generator(seed, stream="split").permutation(len(scene_set))
    n_train = int(round(train_frac * len(scene_set)))
    return scene_set.subset(order[:n_train]), scene_set.subset(order[n_train:])
