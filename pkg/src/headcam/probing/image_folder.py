import logging
from pathlib import Path
from typing import List, Tuple

import cv2
import numpy as np

from headcam.errors import DataFileNotFoundError, DecodeError, EmptyInputError
from headcam.importers import PreprocessConfig, preprocess_frame

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".jpg", ".jpeg", ".png", ".bmp"}

# Probing protocol for generic labeled image folders: centered crop without a timestamp shift
FOLDER_PREPROCESS = PreprocessConfig(minor_edge=256, crop_size=224, crop_shift=0)


def load_image_folder(
    dir_images: Path, preprocess: PreprocessConfig = FOLDER_PREPROCESS
) -> Tuple[np.ndarray, np.ndarray, List[str]]:
    """Loads a labeled image folder with one sub-directory per class.

    Args:
        dir_images (Path): Root directory; sub-directory names are the class names.
        preprocess (PreprocessConfig): Resize and crop geometry.

    Returns:
        Tuple[np.ndarray, np.ndarray, List[str]]: N×H×W×3 frames, N class ids and the class names.

    Raises:
        DataFileNotFoundError: If the directory does not exist.
        EmptyInputError: If it holds no images.
        DecodeError: If an image cannot be read.
    """
    if not dir_images.is_dir():
        raise DataFileNotFoundError(f"No image folder '{dir_images}' found.")
    vocabulary = sorted(path.name for path in dir_images.iterdir() if path.is_dir())
    frames, labels = [], []
    for label, name in enumerate(vocabulary):
        paths = sorted(p for p in (dir_images / name).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        for path_image in paths:
            image = cv2.imread(str(path_image), cv2.IMREAD_COLOR)
            if image is None:
                raise DecodeError(f"Image '{path_image}' could not be read.")
            frames.append(preprocess_frame(cv2.cvtColor(image, cv2.COLOR_BGR2RGB), preprocess))
            labels.append(label)
    if not frames:
        raise EmptyInputError(f"Image folder '{dir_images}' contains no images.")
    logger.info(f"{len(frames)} images in {len(vocabulary)} classes loaded from '{dir_images}'.")
    return np.stack(frames), np.asarray(labels, dtype=np.int64), vocabulary
