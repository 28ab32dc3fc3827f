"""Ego-centred, heading-aligned, scale-normalised coordinates."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ..errors import DataError
from .scenes import SceneBatch


def scene_frames(past: np.ndarray, rotate: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Per-scene origin ``[N, 2]`` (last observed ego point) and row-vector
    rotation ``[N, 2, 2]`` taking the last observed heading to ``+x``."""
    past = np.asarray(past, dtype=np.float64)
    origin = past[:, -1, :]
    n = past.shape[0]
    rot = np.broadcast_to(np.eye(2), (n, 2, 2)).copy()
    if rotate and past.shape[1] >= 2:
        d = past[:, -1] - past[:, -2]
        norm = np.hypot(d[:, 0], d[:, 1])
        ok = norm > 0
        c = np.where(ok, d[:, 0] / np.where(ok, norm, 1.0), 1.0)
        s = np.where(ok, d[:, 1] / np.where(ok, norm, 1.0), 0.0)
        rot[:, 0, 0], rot[:, 0, 1] = c, -s
        rot[:, 1, 0], rot[:, 1, 1] = s, c
    return origin, rot


class SceneNormalizer(TransformerMixin, BaseEstimator):
    """Maps scene batches into the model frame and predictions back out.

    ``scale=None`` fits the RMS ego coordinate of the training data in the
    ego frame, so the future roughly has unit spread.
    """

    def __init__(self, rotate: bool = True, scale: float | None = None):
        self.rotate = rotate
        self.scale = scale

    def fit(self, X: SceneBatch, y=None):
        if self.scale is not None:
            if not self.scale > 0:
                raise DataError(f"scale must be positive, got {self.scale}")
            self.scale_ = float(self.scale)
            return self
        origin, rot = scene_frames(X.past, self.rotate)
        parts = [X.past]
        if X.future is not None:
            parts.append(X.future)
        pts = np.concatenate(parts, axis=1)
        local = np.einsum("ntd,nde->nte", pts - origin[:, None], rot)
        rms = float(np.sqrt(np.mean(local * local)))
        self.scale_ = rms if rms > 0 else 1.0
        return self

    def _check(self):
        if not hasattr(self, "scale_"):
            raise DataError("SceneNormalizer is not fitted")

    def to_local(self, points: np.ndarray, past: np.ndarray) -> np.ndarray:
        """World ``[N, ..., 2]`` to model frame for the scenes with ego ``past``."""
        self._check()
        origin, rot = scene_frames(past, self.rotate)
        points = np.asarray(points, dtype=np.float64)
        extra = points.ndim - 2
        o = origin.reshape((origin.shape[0],) + (1,) * extra + (2,))
        flat = (points - o).reshape(points.shape[0], -1, 2)
        return (np.einsum("npd,nde->npe", flat, rot) / self.scale_).reshape(points.shape)

    def to_world(self, points: np.ndarray, past: np.ndarray) -> np.ndarray:
        self._check()
        origin, rot = scene_frames(past, self.rotate)
        points = np.asarray(points, dtype=np.float64)
        extra = points.ndim - 2
        flat = points.reshape(points.shape[0], -1, 2) * self.scale_
        world = np.einsum("npe,nde->npd", flat, rot).reshape(points.shape)
        return world + origin.reshape((origin.shape[0],) + (1,) * extra + (2,))

    def transform(self, X: SceneBatch) -> SceneBatch:
        fut = None if X.future is None else self.to_local(X.future, X.past)
        return SceneBatch(
            past=self.to_local(X.past, X.past),
            neighbors=self.to_local(X.neighbors, X.past),
            future=fut,
            ids=X.ids,
        )

    def inverse_transform(self, trajectories: np.ndarray, past: np.ndarray) -> np.ndarray:
        """Model-frame predictions ``[N, ..., T_f, 2]`` back to world coordinates."""
        return self.to_world(trajectories, past)
