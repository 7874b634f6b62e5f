import logging
from pathlib import Path
from typing import Optional

import numpy as np

from headcam.importers import FrameRecord, Manifest, ShardWriter, TemporalLabeling

logger = logging.getLogger(__name__)


def write_dataset(
    frames: np.ndarray,
    manifest: Manifest,
    dir_output: Path,
    labeling: Optional[TemporalLabeling] = None,
    shard_size: int = 4096,
) -> Manifest:
    """Writes generated frames in the ingest layout: shards, `manifest.ndjson` and optionally `temporal_classes.csv`."""
    writer = ShardWriter(dir_output=dir_output, shard_size=shard_size)
    for row, frame in zip(manifest.entries.iter_rows(named=True), frames):
        writer.add(
            FrameRecord(
                frame_id=row["frame_id"],
                recording_id=row["recording_id"],
                timestamp_s=row["timestamp_s"],
                image=frame,
                label=row["label"],
                exemplar_id=row["exemplar_id"],
            )
        )
    written = writer.close(fps=manifest.fps, preprocessing=manifest.preprocessing)
    written.write(dir_output / "manifest.ndjson")
    if labeling is not None:
        labeling.write(dir_output / "temporal_classes.csv")
    return written
