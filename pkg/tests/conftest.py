import numpy as np
import polars as pl
import pytest
import torch

from headcam.fixtures import EpisodicWorldConfig, ShapeWorldConfig, generate_episodic, generate_shapes
from headcam.importers import Manifest


def make_manifest(n_frames: int, fps: float = 1.0, recording_ids=None, labels=None, exemplar_ids=None) -> Manifest:
    """Manifest of `n_frames` consecutive frames, by default from a single recording."""
    recording_ids = recording_ids if recording_ids is not None else ["rec"] * n_frames
    columns = {
        "frame_id": np.arange(n_frames),
        "recording_id": recording_ids,
        "timestamp_s": np.arange(n_frames) / fps,
    }
    if labels is not None:
        columns["label"] = labels
    if exemplar_ids is not None:
        columns["exemplar_id"] = exemplar_ids
    return Manifest(entries=pl.DataFrame(columns), fps=fps)


@pytest.fixture(autouse=True)
def _seed_torch():
    torch.manual_seed(0)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(42)


@pytest.fixture(scope="session")
def small_episodic():
    """Four short, well separated episodes of 16×16 frames."""
    config = EpisodicWorldConfig(n_episodes=4, frames_per_episode=12, image_size=16, seed=3)
    return generate_episodic(config)


@pytest.fixture(scope="session")
def small_shapes():
    """Four classes of five exemplars with three views each."""
    config = ShapeWorldConfig(n_classes=4, exemplars_per_class=5, views_per_exemplar=3, image_size=16, seed=1)
    return generate_shapes(config)
