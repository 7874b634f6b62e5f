import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import polars as pl

from headcam.errors import ConfigError, ContractError
from headcam.importers import Manifest, TemporalLabeling, assign_temporal_classes

logger = logging.getLogger(__name__)

# Latent layout: background RGB, foreground RGB, grating orientation, grating frequency, blob x, blob y
LATENT_DIM = 10


@dataclass(frozen=True)
class EpisodicWorldConfig:
    """Procedural longitudinal video: episodes with their own appearance that drifts slowly.

    Attributes:
        n_episodes (int): Number of episodes.
        frames_per_episode (int): Frames in every episode.
        image_size (int): Frame edge in pixels.
        drift_rate (float): Latent step length per frame.
        noise_sigma (float): Standard deviation of the additive pixel noise, in [0, 1] units.
        fps (float): Rate the frames are stamped at.
        seed (int): Generator seed.
    """

    n_episodes: int = 20
    frames_per_episode: int = 200
    image_size: int = 32
    drift_rate: float = 0.01
    noise_sigma: float = 0.02
    fps: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if min(self.n_episodes, self.frames_per_episode, self.image_size) < 1:
            raise ConfigError("Episodic world sizes must be positive.")
        if self.drift_rate < 0 or self.noise_sigma < 0 or self.fps <= 0:
            raise ConfigError("Episodic world drift and noise must be non-negative and fps positive.")

    @property
    def segment_length_s(self) -> float:
        return self.frames_per_episode / self.fps


def _episode_latents(config: EpisodicWorldConfig, rng: np.random.Generator) -> np.ndarray:
    """E×F×L latent trajectories: a random start per episode followed by a random walk."""
    starts = rng.uniform(0.0, 1.0, size=(config.n_episodes, LATENT_DIM))
    steps = rng.normal(size=(config.n_episodes, config.frames_per_episode - 1, LATENT_DIM))
    steps *= config.drift_rate / np.linalg.norm(steps, axis=2, keepdims=True).clip(min=1e-12)
    walk = np.concatenate([np.zeros((config.n_episodes, 1, LATENT_DIM)), np.cumsum(steps, axis=1)], axis=1)
    return starts[:, None, :] + walk


def _check_separability(config: EpisodicWorldConfig, latents: np.ndarray) -> None:
    if config.n_episodes < 2:
        return
    starts = latents[:, 0, :]
    distances = np.linalg.norm(starts[:, None, :] - starts[None, :, :], axis=2)
    inter = distances[np.triu_indices(config.n_episodes, k=1)]
    if config.drift_rate >= inter.min():
        raise ConfigError(
            f"Drift rate {config.drift_rate} is not below the closest inter-episode distance {inter.min():.4f}."
        )
    centers = latents.mean(axis=1)
    intra = np.linalg.norm(latents - centers[:, None, :], axis=2).mean()
    inter_centers = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=2)
    inter_mean = inter_centers[np.triu_indices(config.n_episodes, k=1)].mean()
    if not intra < inter_mean:
        raise ContractError(f"Episodes are not separable: intra {intra:.4f} vs inter {inter_mean:.4f}.")


def render_latents(latents: np.ndarray, image_size: int) -> np.ndarray:
    """Renders N×L latents as N×S×S×3 images in [0, 1]: a two-colour grating with a soft blob."""
    z = np.clip(latents, 0.0, 1.0)
    axis = (np.arange(image_size) + 0.5) / image_size
    y, x = np.meshgrid(axis, axis, indexing="ij")
    theta = z[:, 6, None, None] * np.pi
    frequency = 1.0 + 3.0 * z[:, 7, None, None]
    grating = 0.5 + 0.5 * np.sin(2 * np.pi * frequency * (x * np.cos(theta) + y * np.sin(theta)))
    blob = np.exp(-((x - z[:, 8, None, None]) ** 2 + (y - z[:, 9, None, None]) ** 2) / (2 * 0.15**2))
    background, foreground = z[:, None, None, 0:3], z[:, None, None, 3:6]
    image = background * (1 - grating[..., None]) + foreground * grating[..., None]
    return image * (1 - blob[..., None]) + (1 - background) * blob[..., None]


def generate_episodic(config: EpisodicWorldConfig = EpisodicWorldConfig()) -> Tuple[np.ndarray, Manifest, TemporalLabeling]:
    """Generates an episodic frame stream with its manifest and ground-truth temporal classes.

    Every episode starts from a random latent appearance (palette, grating, blob) that then
    drifts by `drift_rate` per frame; pixel noise is added on top. Episodes follow each other
    in one chronological stream stamped at `fps`, so the ground truth equals the temporal
    classes of segment length frames_per_episode / fps.

    Args:
        config (EpisodicWorldConfig): World parameters.

    Returns:
        Tuple[np.ndarray, Manifest, TemporalLabeling]: N×S×S×3 uint8 frames, the manifest (frames
        labeled by episode, not yet sharded) and the ground-truth labeling.

    Raises:
        ConfigError: If the drift rate reaches the closest inter-episode latent distance.
    """
    rng = np.random.default_rng(config.seed)
    latents = _episode_latents(config, rng)
    _check_separability(config, latents)
    n_frames = config.n_episodes * config.frames_per_episode
    images = render_latents(latents.reshape(n_frames, LATENT_DIM), config.image_size)
    if config.noise_sigma > 0:
        images = images + rng.normal(scale=config.noise_sigma, size=images.shape)
    frames = np.round(np.clip(images, 0.0, 1.0) * 255).astype(np.uint8)

    episodes = np.repeat(np.arange(config.n_episodes), config.frames_per_episode)
    entries = pl.DataFrame(
        {
            "frame_id": np.arange(n_frames),
            "recording_id": ["episodic"] * n_frames,
            "timestamp_s": np.arange(n_frames) / config.fps,
            "label": [f"episode{episode:03d}" for episode in episodes],
        }
    )
    manifest = Manifest(entries=entries, fps=config.fps, preprocessing={"image_size": config.image_size})
    labeling = assign_temporal_classes(manifest, segment_length_s=config.segment_length_s)
    if not np.array_equal(labeling.class_ids, episodes):
        raise ContractError("Temporal classes do not reproduce the generated episodes.")
    logger.info(f"Episodic world with {config.n_episodes} episodes of {config.frames_per_episode} frames generated.")
    return frames, manifest, labeling
