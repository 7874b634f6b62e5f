import numpy as np
import torch
import torchvision.transforms.functional as TF

from headcam.errors import FormatError

from .config import AugmentConfig, NormalizationConstants

LUMINANCE_WEIGHTS = (0.299, 0.587, 0.114)


def to_tensor(frame: np.ndarray) -> torch.Tensor:
    """Converts an H×W×3 uint8 frame to a 3×H×W float tensor in [0, 1]."""
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise FormatError(f"Expected an H×W×3 frame, got shape {frame.shape}.")
    return torch.from_numpy(np.ascontiguousarray(frame)).permute(2, 0, 1).float().div(255.0)


def luminance(image: torch.Tensor) -> torch.Tensor:
    """Returns the 1×H×W luminance plane of a 3×H×W image."""
    r, g, b = image[0], image[1], image[2]
    w_r, w_g, w_b = LUMINANCE_WEIGHTS
    return (w_r * r + w_g * g + w_b * b).unsqueeze(0)


def _uniform(generator: torch.Generator, low: float = 0.0, high: float = 1.0) -> float:
    return low + (high - low) * float(torch.rand(1, generator=generator).item())


def color_jitter(image: torch.Tensor, config: AugmentConfig, generator: torch.Generator) -> torch.Tensor:
    """Randomly jitters brightness, contrast, saturation and hue of an image.

    With probability `config.jitter_prob` the four adjustments are applied in a random order,
    each with a factor drawn from its configured range; otherwise the image is returned as is.
    Sub-transforms with zero strength are skipped.

    Args:
        image (torch.Tensor): 3×H×W image with values in [0, 1].
        config (AugmentConfig): Jitter probability and strengths.
        generator (torch.Generator): Random stream for this frame and view.

    Returns:
        torch.Tensor: The jittered image, same shape, values in [0, 1].
    """
    if _uniform(generator) >= config.jitter_prob:
        return image
    order = torch.randperm(4, generator=generator).tolist()
    for op in order:
        if op == 0 and config.brightness > 0:
            factor = _uniform(generator, max(0.0, 1.0 - config.brightness), 1.0 + config.brightness)
            image = TF.adjust_brightness(image, factor)
        elif op == 1 and config.contrast > 0:
            factor = _uniform(generator, max(0.0, 1.0 - config.contrast), 1.0 + config.contrast)
            image = TF.adjust_contrast(image, factor)
        elif op == 2 and config.saturation > 0:
            factor = _uniform(generator, max(0.0, 1.0 - config.saturation), 1.0 + config.saturation)
            image = TF.adjust_saturation(image, factor)
        elif op == 3 and config.hue > 0:
            # HSV rotation with wraparound, no clamping needed
            image = TF.adjust_hue(image, _uniform(generator, -config.hue, config.hue))
    return image


def random_grayscale(image: torch.Tensor, p: float, generator: torch.Generator) -> torch.Tensor:
    """Replaces all channels by the luminance with probability p."""
    if image.shape[0] != 3:
        raise FormatError(f"Expected a 3-channel image, got {image.shape[0]} channels.")
    if _uniform(generator) >= p:
        return image
    return luminance(image).expand(3, -1, -1).clone()


def normalize(image: torch.Tensor, constants: NormalizationConstants) -> torch.Tensor:
    """Standardizes each channel: (image - mean) / std."""
    return TF.normalize(image, mean=list(constants.mean), std=list(constants.std))
