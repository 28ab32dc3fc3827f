from .io import read_scenes, write_scenes
from .rng import BatchGenerator, Generator, batch_for, derive_key
from .scenes import SceneBatch, SceneSet, TrajectoryScene, check_scenes, stack_scenes
from .synthetic import GenConfig, generate_synthetic, split

__all__ = [
    "BatchGenerator",
    "GenConfig",
    "Generator",
    "SceneBatch",
    "SceneSet",
    "TrajectoryScene",
    "batch_for",
    "check_scenes",
    "derive_key",
    "generate_synthetic",
    "read_scenes",
    "split",
    "stack_scenes",
    "write_scenes",
]
