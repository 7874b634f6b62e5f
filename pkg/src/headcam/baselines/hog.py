import logging
from dataclasses import dataclass
from functools import partial
from multiprocessing import Pool

import numpy as np
from skimage.feature import hog

from headcam.errors import ConfigError, FormatError, ParameterError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HogConfig:
    """Histogram-of-oriented-gradients descriptor parameters.

    Attributes:
        orientations (int): Orientation bins over [0°, 180°).
        cell_px (int): Cell edge in pixels.
        block_cells (int): Block edge in cells; blocks overlap with a stride of one cell.
        block_norm (str): Block normalization, `L2` by default.
        signed_gradients (bool): Only unsigned gradients are supported.
    """

    orientations: int = 9
    cell_px: int = 16
    block_cells: int = 3
    block_norm: str = "L2"
    signed_gradients: bool = False

    def __post_init__(self):
        if min(self.orientations, self.cell_px, self.block_cells) < 1:
            raise ConfigError("HOG orientations, cell size and block size must be positive.")
        if self.block_norm not in ("L1", "L1-sqrt", "L2", "L2-Hys"):
            raise ConfigError(f"Unknown HOG block normalization '{self.block_norm}'.")
        if self.signed_gradients:
            raise ConfigError("Signed HOG gradients are not supported.")

    def feature_length(self, height: int, width: int) -> int:
        """Descriptor length: (⌊H/c⌋ − b + 1)·(⌊W/c⌋ − b + 1)·b²·o."""
        blocks_row = height // self.cell_px - self.block_cells + 1
        blocks_col = width // self.cell_px - self.block_cells + 1
        return blocks_row * blocks_col * self.block_cells**2 * self.orientations


def hog_features(image: np.ndarray, config: HogConfig = HogConfig()) -> np.ndarray:
    """Computes the HOG descriptor of an H×W×3 image.

    Gradients are central differences without smoothing or gamma correction. In colour
    images each pixel takes the gradient of the channel with the largest magnitude. Blocks
    whose gradients are all zero stay zero after normalization.

    Args:
        image (np.ndarray): H×W×3 image, integer or real valued.
        config (HogConfig): Descriptor parameters.

    Returns:
        np.ndarray: Feature vector of length `config.feature_length(H, W)`.

    Raises:
        FormatError: If the image is not H×W×3.
        ParameterError: If an edge is shorter than one block.
    """
    if image.ndim != 3 or image.shape[2] != 3:
        raise FormatError(f"HOG expects an H×W×3 image, got shape {image.shape}.")
    height, width = image.shape[:2]
    min_edge = config.block_cells * config.cell_px
    if height < min_edge or width < min_edge:
        raise ParameterError(f"Image {height}×{width} is smaller than one HOG block of {min_edge} px.")
    blocks = hog(
        image.astype(np.float64),
        orientations=config.orientations,
        pixels_per_cell=(config.cell_px, config.cell_px),
        cells_per_block=(config.block_cells, config.block_cells),
        block_norm=config.block_norm,
        transform_sqrt=False,
        feature_vector=False,
        channel_axis=-1,
    )
    if config.block_norm != "L2":
        return blocks.ravel()
    # skimage adds eps² under the root; rescale each nonzero block to exactly unit norm
    blocks = blocks.reshape(-1, config.block_cells**2 * config.orientations)
    norms = np.linalg.norm(blocks, axis=1, keepdims=True)
    np.divide(blocks, norms, out=blocks, where=norms > 0)
    return blocks.ravel()


class HogExtractor:
    """Feature source computing HOG descriptors for a batch of frames."""

    source = "hog"

    def __init__(self, config: HogConfig = HogConfig(), workers: int = 1):
        self.config = config
        self.workers = workers

    def embedding_dim(self, height: int, width: int) -> int:
        return self.config.feature_length(height, width)

    def __call__(self, frames: np.ndarray) -> np.ndarray:
        if len(frames) == 0:
            return np.zeros((0, self.embedding_dim(*frames.shape[1:3])))
        compute = partial(hog_features, config=self.config)
        if self.workers > 1:
            with Pool(processes=self.workers) as pool:
                features = pool.map(compute, list(frames))
        else:
            features = [compute(frame) for frame in frames]
        logger.info(f"HOG descriptors computed for {len(features)} frames.")
        return np.stack(features)
