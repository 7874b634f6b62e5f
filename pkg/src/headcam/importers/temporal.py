import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import polars as pl

from headcam.errors import EmptyInputError, ParameterError

from .manifest import Manifest

logger = logging.getLogger(__name__)


def frames_per_class(segment_length_s: float, fps: float) -> int:
    """Number of frames in one temporal class: segment length × fps rounded half up."""
    return int(math.floor(segment_length_s * fps + 0.5))


@dataclass
class TemporalLabeling:
    """Maps frames to temporal classes (episodes) of equal duration.

    Attributes:
        segment_length_s (float): Duration of one temporal class.
        fps (float): Sampling rate of the frames.
        frame_ids (np.ndarray): Labeled frame ids in manifest order.
        class_ids (np.ndarray): Temporal class of each labeled frame, contiguous from 0.
        n_classes (int): Number of temporal classes.
    """

    segment_length_s: float
    fps: float
    frame_ids: np.ndarray
    class_ids: np.ndarray
    n_classes: int

    def class_of(self, frame_id: int) -> int:
        position = int(np.searchsorted(self.frame_ids, frame_id))
        if position >= len(self.frame_ids) or self.frame_ids[position] != frame_id:
            raise KeyError(f"Frame {frame_id} has no temporal class.")
        return int(self.class_ids[position])

    @property
    def frames_per_class(self) -> int:
        return frames_per_class(self.segment_length_s, self.fps)

    def to_frame(self) -> pl.DataFrame:
        return pl.DataFrame({"frame_id": self.frame_ids, "class_id": self.class_ids})

    def write(self, path_file: Path) -> None:
        self.to_frame().with_columns(
            pl.lit(self.segment_length_s).alias("segment_length_s"), pl.lit(self.fps).alias("fps")
        ).write_csv(path_file)
        logger.info(f"Temporal labeling with {self.n_classes} classes written to '{path_file}'.")

    @classmethod
    def read(cls, path_file: Path) -> "TemporalLabeling":
        df = pl.read_csv(path_file)
        class_ids = df["class_id"].to_numpy()
        return cls(
            segment_length_s=float(df["segment_length_s"][0]),
            fps=float(df["fps"][0]),
            frame_ids=df["frame_id"].to_numpy(),
            class_ids=class_ids,
            n_classes=int(class_ids.max()) + 1 if len(class_ids) else 0,
        )


def assign_temporal_classes(
    manifest: Manifest,
    segment_length_s: float,
    reset_episodes_per_recording: bool = False,
    drop_last_episode: bool = False,
) -> TemporalLabeling:
    """Divides the chronological frame sequence into temporal classes of equal duration.

    The frame at ordinal position i belongs to class floor(i / n) with n = round(segment_length_s × fps).
    Episodes run across recording boundaries unless `reset_episodes_per_recording` restarts
    the count at every recording. The last, possibly shorter, episode is its own class unless
    `drop_last_episode` removes its frames.

    Args:
        manifest (Manifest): Frames in chronological order.
        segment_length_s (float): Duration of each temporal class in seconds.
        reset_episodes_per_recording (bool): Start a new episode at every recording.
        drop_last_episode (bool): Drop incomplete final episodes.

    Returns:
        TemporalLabeling: The class of every retained frame.

    Raises:
        EmptyInputError: If the manifest has no frames.
        ParameterError: If an episode would contain less than one frame.
    """
    if len(manifest) == 0:
        raise EmptyInputError("Cannot assign temporal classes to an empty manifest.")
    n_per_class = frames_per_class(segment_length_s, manifest.fps)
    if n_per_class < 1:
        raise ParameterError(
            f"Segment length {segment_length_s} s at {manifest.fps} fps gives less than one frame per class."
        )
    frame_ids = manifest.frame_ids
    if reset_episodes_per_recording:
        recording_ids = manifest.recording_ids
        # Group boundaries where the recording changes
        starts = np.flatnonzero(np.r_[True, recording_ids[1:] != recording_ids[:-1]])
        groups = np.split(np.arange(len(frame_ids)), starts[1:])
    else:
        groups = [np.arange(len(frame_ids))]

    kept_positions, class_ids = [], []
    offset = 0
    for positions in groups:
        local = np.arange(len(positions)) // n_per_class
        if drop_last_episode and len(positions) % n_per_class:
            keep = local < len(positions) // n_per_class
            positions, local = positions[keep], local[keep]
        kept_positions.append(positions)
        class_ids.append(local + offset)
        offset += int(local.max()) + 1 if len(local) else 0

    positions = np.concatenate(kept_positions)
    labeling = TemporalLabeling(
        segment_length_s=segment_length_s,
        fps=manifest.fps,
        frame_ids=frame_ids[positions],
        class_ids=np.concatenate(class_ids).astype(np.int64),
        n_classes=offset,
    )
    logger.info(
        f"{len(positions)} frames assigned to {labeling.n_classes} temporal classes of {n_per_class} frames."
    )
    return labeling
