import logging
from dataclasses import asdict, dataclass
from multiprocessing import Pool
from pathlib import Path
from typing import Iterator, List, Optional, Tuple

import numpy as np
import polars as pl

from headcam.errors import ConfigError, EmptyInputError

from .annotations import AnnotationFile, SynonymTable, curate_labels
from .manifest import FrameRecord, Manifest, ShardWriter
from .preprocess import PreprocessConfig, preprocess_frame
from .recordings import RawRecording, decode_and_sample
from .temporal import TemporalLabeling, assign_temporal_classes

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DataConfig:
    """Settings for turning recordings into a frame dataset."""

    videos_dir: Optional[str] = None
    child_tag: Optional[str] = None
    stream_fps: float = 30.0
    fps: float = 5.0
    segment_length_s: float = 288.0
    minor_edge: int = 256
    crop_size: int = 224
    crop_shift: int = 16
    shard_size: int = 4096
    reset_episodes_per_recording: bool = False
    drop_last_episode: bool = False
    annotations: Optional[str] = None
    synonyms: Optional[str] = None
    label_fps: float = 1.0
    min_frames: int = 100
    top_k: int = 30
    drop_top: int = 2

    def __post_init__(self):
        if self.fps <= 0:
            raise ConfigError(f"data.fps must be positive, got {self.fps}.")
        if self.segment_length_s <= 0:
            raise ConfigError(f"data.segment_length_s must be positive, got {self.segment_length_s}.")
        if self.shard_size < 1:
            raise ConfigError(f"data.shard_size must be at least 1, got {self.shard_size}.")

    @property
    def preprocess(self) -> PreprocessConfig:
        return PreprocessConfig(minor_edge=self.minor_edge, crop_size=self.crop_size, crop_shift=self.crop_shift)


def _sample_recording(args: Tuple[RawRecording, float, PreprocessConfig]) -> Tuple[np.ndarray, np.ndarray]:
    """Decodes and preprocesses one recording; runs in a worker process."""
    recording, fps, preprocess = args
    timestamps, frames = [], []
    for timestamp, raw in decode_and_sample(recording, target_fps=fps):
        timestamps.append(timestamp)
        frames.append(preprocess_frame(raw, preprocess))
    if not frames:
        return np.zeros(0), np.zeros((0, preprocess.crop_size, preprocess.crop_size, 3), dtype=np.uint8)
    return np.asarray(timestamps), np.stack(frames)


def _iter_sampled(
    jobs: List[Tuple[RawRecording, float, PreprocessConfig]], workers: int
) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """Yields sampled recordings in job order, one at a time."""
    if workers > 1:
        with Pool(processes=workers) as pool:
            yield from pool.imap(_sample_recording, jobs)
    else:
        yield from map(_sample_recording, jobs)


def _label_lookup(config: DataConfig) -> Optional[pl.DataFrame]:
    if config.annotations is None:
        return None
    synonyms = SynonymTable.from_file(Path(config.synonyms)) if config.synonyms else None
    df_labels = curate_labels(
        AnnotationFile(Path(config.annotations)).cells,
        min_frames=config.min_frames,
        top_k=config.top_k,
        drop_top=config.drop_top,
        fps=config.fps,
        synonyms=synonyms,
        count_fps=config.label_fps,
    )
    # Join key robust to float formatting of timestamps
    return df_labels.with_columns((pl.col("timestamp_s") * 1000).round().cast(pl.Int64).alias("timestamp_ms"))


def ingest_recordings(
    recordings: List[RawRecording], config: DataConfig, dir_output: Path, workers: int = 1
) -> Tuple[Manifest, TemporalLabeling]:
    """Decodes recordings into shards and a manifest, then assigns temporal classes.

    Recordings are decoded in parallel and handed to the shard writer one at a time. The
    manifest order is the sorted recording order, then timestamp, regardless of which worker
    finishes first.

    Args:
        recordings (List[RawRecording]): Source recordings.
        config (DataConfig): Sampling, preprocessing, episode and label settings.
        dir_output (Path): Directory receiving `manifest.ndjson`, `shards/` and `temporal_classes.csv`.
        workers (int): Number of decoding processes.

    Returns:
        Tuple[Manifest, TemporalLabeling]: The written manifest and its temporal labeling.

    Raises:
        EmptyInputError: If no frames were sampled.
    """
    recordings = sorted(recordings, key=lambda recording: recording.id)
    jobs = [(recording, config.fps, config.preprocess) for recording in recordings]
    df_labels = _label_lookup(config)
    writer = ShardWriter(dir_output=dir_output, shard_size=config.shard_size)
    frame_id = 0
    for recording, (timestamps, frames) in zip(recordings, _iter_sampled(jobs, workers)):
        labels = {}
        if df_labels is not None:
            df_recording = df_labels.filter(pl.col("recording_id") == recording.id)
            labels = dict(zip(df_recording["timestamp_ms"].to_list(), df_recording["label"].to_list()))
        for timestamp, frame in zip(timestamps, frames):
            writer.add(
                FrameRecord(
                    frame_id=frame_id,
                    recording_id=recording.id,
                    timestamp_s=float(timestamp),
                    image=frame,
                    label=labels.get(int(round(timestamp * 1000))),
                )
            )
            frame_id += 1
        logger.info(f"Recording '{recording.id}' sampled to {len(timestamps)} frames.")

    manifest = writer.close(fps=config.fps, preprocessing=asdict(config.preprocess))
    if len(manifest) == 0:
        raise EmptyInputError("No frames were sampled from the recordings.")
    manifest.write(dir_output / "manifest.ndjson")
    labeling = assign_temporal_classes(
        manifest,
        segment_length_s=config.segment_length_s,
        reset_episodes_per_recording=config.reset_episodes_per_recording,
        drop_last_episode=config.drop_last_episode,
    )
    labeling.write(dir_output / "temporal_classes.csv")
    return manifest, labeling
