import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List

import cv2
import numpy as np
import polars as pl
import torch
import torch.nn.functional as F

from headcam.errors import ContractError, ShapeError

logger = logging.getLogger(__name__)

DEGENERATE_STD = 1e-8


@dataclass
class AttentionMap:
    """Class activation map of one image for one class.

    Attributes:
        raw (np.ndarray): h×w class-weighted sum of the final spatial feature maps.
        upsampled (np.ndarray): H×W map in [0, 1].
        class_id (int): Class the map explains.
        image_id (int): Image the map belongs to.
    """

    raw: np.ndarray
    upsampled: np.ndarray
    class_id: int = 0
    image_id: int = 0


def cam(
    spatial_features: np.ndarray,
    class_weights: np.ndarray,
    size: int = 224,
    std_on_raw: bool = False,
    class_id: int = 0,
    image_id: int = 0,
) -> AttentionMap:
    """Builds a class activation map from a spatial feature stack and a linear probe's class weights.

    The raw map Σ_d w_d·feat_d is upsampled bicubically to size×size, divided by its
    population standard deviation, scaled by 10 and passed through a sigmoid. With
    `std_on_raw` the deviation is taken over the raw h×w map instead. A map whose deviation is
    below 1e-8 becomes uniformly 0.5.

    Args:
        spatial_features (np.ndarray): D×h×w final spatial layer of one image.
        class_weights (np.ndarray): D probe weights of the class.
        size (int): Output edge in pixels.
        std_on_raw (bool): Normalize by the deviation of the raw map.
        class_id (int): Class the weights belong to.
        image_id (int): Image the features belong to.

    Returns:
        AttentionMap: Raw and upsampled maps.

    Raises:
        ShapeError: If the weights do not match the feature depth.
    """
    if spatial_features.ndim != 3 or class_weights.shape != (spatial_features.shape[0],):
        raise ShapeError(
            f"Features {spatial_features.shape} and weights {class_weights.shape} do not form a D×h×w / D pair."
        )
    raw = np.tensordot(np.asarray(class_weights, dtype=np.float64), spatial_features.astype(np.float64), axes=1)
    upsampled = F.interpolate(
        torch.from_numpy(raw)[None, None], size=(size, size), mode="bicubic", align_corners=False
    )[0, 0].numpy()
    std = float(raw.std() if std_on_raw else upsampled.std())
    if std < DEGENERATE_STD:
        normalized = np.full((size, size), 0.5)
    else:
        normalized = torch.sigmoid(torch.from_numpy(10.0 * upsampled / std)).numpy()
    return AttentionMap(raw=raw, upsampled=normalized, class_id=class_id, image_id=image_id)


def mask_image(image: np.ndarray, attention: AttentionMap) -> np.ndarray:
    """Multiplies every channel of an H×W×3 image by the attention map, keeping the image dtype.

    Raises:
        ContractError: If the image and map sizes differ.
    """
    if image.ndim != 3 or image.shape[:2] != attention.upsampled.shape:
        raise ContractError(f"Image {image.shape} does not match attention map {attention.upsampled.shape}.")
    masked = image.astype(np.float64) * attention.upsampled[:, :, None]
    if np.issubdtype(image.dtype, np.integer):
        return np.round(masked).astype(image.dtype)
    return masked.astype(image.dtype)


def export_attention_maps(
    maps: List[AttentionMap], images: dict, dir_output: Path
) -> pl.DataFrame:
    """Writes each map and its masked image as PNG files plus an `index.csv`.

    Args:
        maps (List[AttentionMap]): Maps to export.
        images (dict): uint8 H×W×3 image per image id, at the map size.
        dir_output (Path): Target directory.

    Returns:
        pl.DataFrame: Index with image_id, class_id, map_path and masked_path.
    """
    dir_output.mkdir(parents=True, exist_ok=True)
    rows = []
    for attention in maps:
        stem = f"image{attention.image_id:06d}_class{attention.class_id:03d}"
        path_map, path_masked = dir_output / f"{stem}_map.png", dir_output / f"{stem}_masked.png"
        cv2.imwrite(str(path_map), np.round(attention.upsampled * 255).astype(np.uint8))
        masked = mask_image(images[attention.image_id], attention)
        cv2.imwrite(str(path_masked), cv2.cvtColor(masked, cv2.COLOR_RGB2BGR))
        rows.append({"image_id": attention.image_id, "class_id": attention.class_id,
                     "map_path": path_map.name, "masked_path": path_masked.name})
    df_index = pl.DataFrame(rows, schema={"image_id": pl.Int64, "class_id": pl.Int64, "map_path": pl.Utf8,
                                          "masked_path": pl.Utf8})
    df_index.write_csv(dir_output / "index.csv")
    logger.info(f"{len(rows)} attention maps written to '{dir_output}'.")
    return df_index
