from dataclasses import dataclass
from typing import Tuple

from headcam.errors import ConfigError


@dataclass(frozen=True)
class AugmentConfig:
    """Photometric augmentation applied to every frame before it reaches a learner.

    Attributes:
        enabled (bool): When false the frame pipeline only normalizes.
        jitter_prob (float): Probability of applying color jitter to a frame.
        brightness (float): Brightness strength s; scale drawn from U[max(0, 1 - s), 1 + s].
        contrast (float): Contrast strength.
        saturation (float): Saturation strength.
        hue (float): Hue strength h as a fraction of the hue circle; shift drawn from U[-h, h].
        grayscale_prob (float): Probability of converting a frame to luminance.
    """

    enabled: bool = True
    jitter_prob: float = 0.8
    brightness: float = 0.8
    contrast: float = 0.8
    saturation: float = 0.8
    hue: float = 0.2
    grayscale_prob: float = 0.2

    def __post_init__(self):
        for name in ("jitter_prob", "grayscale_prob"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"augment.{name} must lie in [0, 1], got {value}.")
        for name in ("brightness", "contrast", "saturation", "hue"):
            value = getattr(self, name)
            if value < 0.0:
                raise ConfigError(f"augment.{name} must be non-negative, got {value}.")
        if self.hue > 0.5:
            raise ConfigError(f"augment.hue must not exceed 0.5, got {self.hue}.")


@dataclass(frozen=True)
class ContrastiveAugmentConfig:
    """Geometric part of the momentum-contrast augmentation recipe.

    Only used by the two contrastive objectives; it runs before the photometric
    augmentation of `AugmentConfig`.
    """

    enabled: bool = True
    crop_scale_min: float = 0.2
    crop_scale_max: float = 1.0
    blur_prob: float = 0.5
    blur_sigma_min: float = 0.1
    blur_sigma_max: float = 2.0
    flip_prob: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.crop_scale_min <= self.crop_scale_max <= 1.0:
            raise ConfigError(
                f"contrastive_augment crop scale must satisfy 0 < min <= max <= 1, "
                f"got ({self.crop_scale_min}, {self.crop_scale_max})."
            )
        for name in ("blur_prob", "flip_prob"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"contrastive_augment.{name} must lie in [0, 1], got {value}.")
        if not 0.0 < self.blur_sigma_min <= self.blur_sigma_max:
            raise ConfigError("contrastive_augment blur sigma range is invalid.")


@dataclass(frozen=True)
class NormalizationConstants:
    """Per-channel mean and standard deviation used to standardize frames."""

    mean: Tuple[float, float, float] = (0.485, 0.456, 0.406)
    std: Tuple[float, float, float] = (0.229, 0.224, 0.225)

    def __post_init__(self):
        if len(self.mean) != 3 or len(self.std) != 3:
            raise ConfigError("Normalization constants need exactly three channels.")
        if any(s <= 0.0 for s in self.std):
            raise ConfigError(f"Normalization std components must be positive, got {self.std}.")
