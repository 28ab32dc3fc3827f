"""Scene containers and the validation helpers estimators use on input."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError


@dataclass
class TrajectoryScene:
    """One prediction instance: ego past, neighbour pasts, optional ego future."""

    past: np.ndarray  # [T_p, 2]
    neighbors: np.ndarray  # [L, T_p, 2]
    future: np.ndarray | None = None  # [T_f, 2]
    scene_id: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.past = np.asarray(self.past, dtype=np.float64)
        self.neighbors = np.asarray(self.neighbors, dtype=np.float64).reshape(-1, self.past.shape[0], 2)
        if self.future is not None:
            self.future = np.asarray(self.future, dtype=np.float64)

    @property
    def t_past(self) -> int:
        return self.past.shape[0]

    @property
    def n_neighbors(self) -> int:
        return self.neighbors.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrajectoryScene):
            return NotImplemented
        same_future = (self.future is None and other.future is None) or (
            self.future is not None and other.future is not None and np.array_equal(self.future, other.future)
        )
        return (
            self.scene_id == other.scene_id
            and np.array_equal(self.past, other.past)
            and np.array_equal(self.neighbors, other.neighbors)
            and same_future
            and _meta_equal(self.meta, other.meta)
        )


def _meta_equal(a: dict, b: dict) -> bool:
    if a.keys() != b.keys():
        return False
    for k in a:
        va, vb = a[k], b[k]
        if isinstance(va, np.ndarray) or isinstance(vb, np.ndarray):
            if not np.array_equal(np.asarray(va), np.asarray(vb)):
                return False
        elif va != vb:
            return False
    return True


@dataclass
class SceneSet:
    scenes: list[TrajectoryScene]
    t_past: int
    t_future: int
    n_neighbors: int
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.scenes)

    def __iter__(self):
        return iter(self.scenes)

    def __getitem__(self, i):
        if isinstance(i, (slice, list, np.ndarray)):
            idx = range(len(self))[i] if isinstance(i, slice) else i
            return self.subset(idx)
        return self.scenes[i]

    def subset(self, indices) -> "SceneSet":
        return SceneSet(
            scenes=[self.scenes[int(i)] for i in indices],
            t_past=self.t_past,
            t_future=self.t_future,
            n_neighbors=self.n_neighbors,
            metadata=dict(self.metadata),
        )

    @property
    def ids(self) -> list[int]:
        return [s.scene_id for s in self.scenes]

    @property
    def has_futures(self) -> bool:
        return all(s.future is not None for s in self.scenes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SceneSet):
            return NotImplemented
        return (
            (self.t_past, self.t_future, self.n_neighbors) == (other.t_past, other.t_future, other.n_neighbors)
            and len(self) == len(other)
            and all(a == b for a, b in zip(self.scenes, other.scenes))
        )


@dataclass
class SceneBatch:
    """Stacked arrays for a homogeneous list of scenes."""

    past: np.ndarray  # [N, T_p, 2]
    neighbors: np.ndarray  # [N, L, T_p, 2]
    future: np.ndarray | None  # [N, T_f, 2]
    ids: np.ndarray

    def __len__(self) -> int:
        return self.past.shape[0]

    def take(self, idx) -> "SceneBatch":
        return SceneBatch(
            past=self.past[idx],
            neighbors=self.neighbors[idx],
            future=None if self.future is None else self.future[idx],
            ids=self.ids[idx],
        )


def check_scenes(scenes, require_future: bool = False) -> SceneSet:
    """Coerce input to a homogeneous :class:`SceneSet` or raise ``DataError``."""
    if isinstance(scenes, SceneSet):
        out = scenes
    elif isinstance(scenes, TrajectoryScene):
        out = _infer_set([scenes])
    else:
        out = _infer_set(list(scenes))
    if len(out) == 0:
        raise DataError("no scenes given")
    for s in out:
        if s.past.shape != (out.t_past, 2):
            raise DataError(f"scene {s.scene_id}: past shape {s.past.shape} != ({out.t_past}, 2)")
        if s.neighbors.shape != (out.n_neighbors, out.t_past, 2):
            raise DataError(f"scene {s.scene_id}: neighbours shape {s.neighbors.shape} inconsistent")
        if s.future is not None and s.future.shape != (out.t_future, 2):
            raise DataError(f"scene {s.scene_id}: future shape {s.future.shape} != ({out.t_future}, 2)")
        if require_future and s.future is None:
            raise DataError(f"scene {s.scene_id} has no ground-truth future")
        arrays = [s.past, s.neighbors] + ([] if s.future is None else [s.future])
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise DataError(f"scene {s.scene_id} contains non-finite coordinates")
    return out


def _infer_set(scenes: list) -> SceneSet:
    if not scenes:
        return SceneSet([], 0, 0, 0)
    first = scenes[0]
    t_future = next((s.future.shape[0] for s in scenes if s.future is not None), 0)
    return SceneSet(scenes, first.t_past, t_future, first.n_neighbors)


def stack_scenes(scene_set: SceneSet) -> SceneBatch:
    future = None
    if scene_set.has_futures:
        future = np.stack([s.future for s in scene_set])
    return SceneBatch(
        past=np.stack([s.past for s in scene_set]),
        neighbors=np.stack([s.neighbors for s in scene_set]),
        future=future,
        ids=np.array(scene_set.ids, dtype=np.int64),
    )
