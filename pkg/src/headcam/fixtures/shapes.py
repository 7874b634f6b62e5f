import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
import polars as pl
from skimage.color import hsv2rgb

from headcam.errors import ConfigError
from headcam.importers import Manifest

logger = logging.getLogger(__name__)

SHAPES = ("circle", "square", "triangle", "cross", "ring", "bar")

CLASS_NAMES = (
    "airplane", "ball", "car", "cat", "cup", "duck", "giraffe", "helicopter", "horse", "mug", "spoon", "truck",
)


@dataclass(frozen=True)
class ShapeWorldConfig:
    """Procedural object dataset: classes of exemplars, each seen from several views.

    Attributes:
        n_classes (int): Object categories.
        exemplars_per_class (int): Distinct objects per category.
        views_per_exemplar (int): Renderings of every object.
        image_size (int): Frame edge in pixels.
        seed (int): Generator seed.
    """

    n_classes: int = 12
    exemplars_per_class: int = 30
    views_per_exemplar: int = 10
    image_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if min(self.n_classes, self.views_per_exemplar, self.image_size) < 1:
            raise ConfigError("Shape world sizes must be positive.")
        if self.exemplars_per_class < 2:
            raise ConfigError("Shape world needs at least 2 exemplars per class to hold some out.")

    def class_names(self) -> List[str]:
        if self.n_classes <= len(CLASS_NAMES):
            return list(CLASS_NAMES[: self.n_classes])
        return [f"class{k:03d}" for k in range(self.n_classes)]


def _shape_mask(shape: str, u: np.ndarray, v: np.ndarray, radius: float) -> np.ndarray:
    if shape == "circle":
        return u**2 + v**2 <= radius**2
    if shape == "square":
        return np.maximum(np.abs(u), np.abs(v)) <= radius
    if shape == "triangle":
        return (v >= -0.5 * radius) & (np.abs(u) <= (radius - v) * 0.6)
    if shape == "cross":
        arm = radius / 3
        return ((np.abs(u) <= arm) & (np.abs(v) <= radius)) | ((np.abs(v) <= arm) & (np.abs(u) <= radius))
    if shape == "ring":
        distance = np.sqrt(u**2 + v**2)
        return (distance >= 0.6 * radius) & (distance <= radius)
    return (np.abs(u) <= radius) & (np.abs(v) <= radius / 4)


def _render(shape: str, rgb: np.ndarray, aspect: float, size: float, rotation: float, shift: np.ndarray,
            background: float, image_size: int) -> np.ndarray:
    axis = (np.arange(image_size) + 0.5) / image_size * 2 - 1
    y, x = np.meshgrid(axis, axis, indexing="ij")
    # Inverse view transform from image to object coordinates
    x, y = x - shift[0], y - shift[1]
    cos, sin = np.cos(rotation), np.sin(rotation)
    u = (cos * x + sin * y) / aspect
    v = -sin * x + cos * y
    mask = _shape_mask(shape, u, v, radius=size)
    image = np.full((image_size, image_size, 3), background)
    image[mask] = rgb
    return image


def generate_shapes(config: ShapeWorldConfig = ShapeWorldConfig()) -> Tuple[np.ndarray, Manifest]:
    """Generates labeled object renderings with class and exemplar ids.

    Class k has the prototype shape SHAPES[k mod 6] and hue k / n_classes. Exemplars jitter
    the hue, saturation, value and aspect of the prototype; views rotate, translate and scale
    the exemplar over a gray background. iid splits therefore test view invariance and
    exemplar splits test generalization to unseen objects.

    Args:
        config (ShapeWorldConfig): World parameters.

    Returns:
        Tuple[np.ndarray, Manifest]: N×S×S×3 uint8 frames and their manifest (labels and exemplar ids set).
    """
    rng = np.random.default_rng(config.seed)
    names = config.class_names()
    frames, rows = [], []
    for k, name in enumerate(names):
        shape = SHAPES[k % len(SHAPES)]
        hue = k / config.n_classes
        for e in range(config.exemplars_per_class):
            hsv = np.array([
                (hue + rng.uniform(-0.02, 0.02)) % 1.0, rng.uniform(0.6, 1.0), rng.uniform(0.6, 1.0),
            ])
            rgb = hsv2rgb(hsv[None, None, :])[0, 0]
            aspect = rng.uniform(0.8, 1.2)
            exemplar_id = f"{name}-{e:02d}"
            for view in range(config.views_per_exemplar):
                image = _render(
                    shape, rgb, aspect,
                    size=rng.uniform(0.35, 0.6),
                    rotation=rng.uniform(0.0, 2 * np.pi),
                    shift=rng.uniform(-0.25, 0.25, size=2),
                    background=rng.uniform(0.35, 0.65),
                    image_size=config.image_size,
                )
                frames.append(np.round(np.clip(image, 0.0, 1.0) * 255).astype(np.uint8))
                rows.append({"frame_id": len(rows), "recording_id": exemplar_id, "timestamp_s": float(view),
                             "label": name, "exemplar_id": exemplar_id})
    manifest = Manifest(entries=pl.DataFrame(rows), fps=1.0, preprocessing={"image_size": config.image_size})
    logger.info(
        f"Shape world with {config.n_classes} classes × {config.exemplars_per_class} exemplars × "
        f"{config.views_per_exemplar} views generated."
    )
    return np.stack(frames), manifest
