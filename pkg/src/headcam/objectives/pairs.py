from typing import Tuple

import numpy as np

from headcam.errors import ContractError
from headcam.importers import Manifest


def temporal_positive_pairs(
    anchors: np.ndarray, manifest: Manifest, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """Pairs each anchor frame with one of its immediate temporal neighbours.

    Anchors and positives are ordinal positions in the manifest's chronological frame
    sequence. An interior anchor i gets i − 1 or i + 1 with equal probability; the first and
    last frame get their single neighbour.

    Args:
        anchors (np.ndarray): Ordinal positions of the anchor frames.
        manifest (Manifest): The chronological frame sequence the positions index.
        rng (np.random.Generator): Source of the neighbour choices.

    Returns:
        Tuple[np.ndarray, np.ndarray]: The anchors and their positives.

    Raises:
        ContractError: If the manifest has fewer than two frames or an anchor lies outside it.
    """
    n_frames = len(manifest)
    if n_frames < 2:
        raise ContractError(f"Temporal pairs need at least 2 frames, got {n_frames}.")
    anchors = np.asarray(anchors, dtype=np.int64)
    if anchors.size and (anchors.min() < 0 or anchors.max() >= n_frames):
        raise ContractError(f"Anchor positions must lie in [0, {n_frames}).")
    steps = np.where(rng.random(anchors.shape) < 0.5, -1, 1)
    steps[anchors == 0] = 1
    steps[anchors == n_frames - 1] = -1
    return anchors, anchors + steps
