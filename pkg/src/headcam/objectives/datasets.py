from typing import Optional, Tuple

import numpy as np
import torch
from torch.utils.data import Dataset

from headcam.augment import FramePipeline, stream_generator


class EpochDataset(Dataset):
    """Frame dataset whose augmentations depend on (seed, epoch, frame_id, view), not on the worker."""

    def __init__(self, frames: np.ndarray, frame_ids: np.ndarray, pipeline: FramePipeline, seed: int):
        self.frames = frames
        self.frame_ids = np.asarray(frame_ids, dtype=np.int64)
        self.pipeline = pipeline
        self.seed = seed
        self.epoch = 0

    def __len__(self) -> int:
        return len(self.frame_ids)

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def view(self, position: int, view_index: int) -> torch.Tensor:
        generator = stream_generator(self.seed, self.epoch, int(self.frame_ids[position]), view_index)
        return self.pipeline(self.frames[position], generator)


class TemporalClassDataset(EpochDataset):
    """Yields (augmented frame, temporal class id)."""

    def __init__(self, frames: np.ndarray, frame_ids: np.ndarray, class_ids: np.ndarray, pipeline: FramePipeline,
                 seed: int):
        super().__init__(frames, frame_ids, pipeline, seed)
        self.class_ids = np.asarray(class_ids, dtype=np.int64)

    def __getitem__(self, position: int) -> Tuple[torch.Tensor, int]:
        return self.view(position, 0), int(self.class_ids[position])


class TwoViewDataset(EpochDataset):
    """Yields (query view, key view) pairs.

    Without a positive table both views are independent augmentations of the same frame.
    With one, the key view is an augmentation of the frame at `positives[position]`.
    """

    def __init__(self, frames: np.ndarray, frame_ids: np.ndarray, pipeline: FramePipeline, seed: int,
                 positives: Optional[np.ndarray] = None):
        super().__init__(frames, frame_ids, pipeline, seed)
        self.positives = positives

    def set_positives(self, positives: np.ndarray) -> None:
        self.positives = np.asarray(positives, dtype=np.int64)

    def __getitem__(self, position: int) -> Tuple[torch.Tensor, torch.Tensor]:
        position_key = position if self.positives is None else int(self.positives[position])
        return self.view(position, 0), self.view(position_key, 1)
