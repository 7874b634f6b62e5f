from dataclasses import dataclass

import cv2
import numpy as np

from headcam.errors import FormatError, ParameterError


@dataclass(frozen=True)
class PreprocessConfig:
    """Resize and crop geometry applied to every sampled frame.

    Attributes:
        minor_edge (int): Length the shorter image edge is resized to.
        crop_size (int): Edge of the square crop.
        crop_shift (int): Pixels the crop is moved toward the top of the frame, excluding a bottom timestamp strip.
    """

    minor_edge: int = 256
    crop_size: int = 224
    crop_shift: int = 16

    def __post_init__(self):
        if self.crop_size < 1 or self.minor_edge < self.crop_size:
            raise ParameterError(
                f"Crop size {self.crop_size} must be positive and at most the minor edge {self.minor_edge}."
            )
        if self.crop_shift < 0:
            raise ParameterError(f"Crop shift must be non-negative, got {self.crop_shift}.")


def resized_shape(height: int, width: int, minor_edge: int) -> tuple[int, int]:
    """Returns (height, width) after scaling the shorter edge to `minor_edge`."""
    scale = minor_edge / min(height, width)
    if height <= width:
        return minor_edge, max(minor_edge, int(np.floor(width * scale + 0.5)))
    return max(minor_edge, int(np.floor(height * scale + 0.5))), minor_edge


def crop_origin(height: int, width: int, crop_size: int, crop_shift: int) -> tuple[int, int]:
    """Returns (top, left) of the centered crop moved `crop_shift` pixels up, kept inside the image."""
    top = (height - crop_size) // 2 - crop_shift
    left = (width - crop_size) // 2
    return min(max(top, 0), height - crop_size), left


def preprocess_frame(raw: np.ndarray, config: PreprocessConfig = PreprocessConfig()) -> np.ndarray:
    """Resizes a frame bicubically so the minor edge matches, then takes the shifted center crop.

    Args:
        raw (np.ndarray): H×W×3 frame.
        config (PreprocessConfig): Resize and crop geometry.

    Returns:
        np.ndarray: crop_size×crop_size×3 frame in the input's dtype and value range.

    Raises:
        FormatError: If the frame is empty or does not have three channels.
    """
    if raw.ndim != 3 or raw.shape[2] != 3 or raw.shape[0] < 1 or raw.shape[1] < 1:
        raise FormatError(f"Expected a non-empty H×W×3 frame, got shape {raw.shape}.")
    height, width = raw.shape[:2]
    new_height, new_width = resized_shape(height, width, config.minor_edge)
    if (new_height, new_width) == (height, width):
        resized = raw
    else:
        resized = cv2.resize(raw, (new_width, new_height), interpolation=cv2.INTER_CUBIC)
        if not np.issubdtype(raw.dtype, np.integer):
            # Bicubic overshoot; integer inputs are saturated by OpenCV
            resized = np.clip(resized, raw.min(), raw.max())
    top, left = crop_origin(new_height, new_width, config.crop_size, config.crop_shift)
    crop = resized[top : top + config.crop_size, left : left + config.crop_size]
    return np.ascontiguousarray(crop)
