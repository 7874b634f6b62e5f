import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional

import numpy as np
import polars as pl

from headcam.errors import DataFileNotFoundError, FormatError, ParameterError

logger = logging.getLogger(__name__)

MANIFEST_FORMAT = "headcam-manifest/1"

MANIFEST_SCHEMA = {
    "frame_id": pl.Int64,
    "recording_id": pl.Utf8,
    "timestamp_s": pl.Float64,
    "label": pl.Utf8,
    "exemplar_id": pl.Utf8,
    "shard_path": pl.Utf8,
    "shard_offset": pl.Int64,
}


@dataclass
class FrameRecord:
    """One preprocessed frame and where it came from."""

    frame_id: int
    recording_id: str
    timestamp_s: float
    image: np.ndarray
    label: Optional[str] = None
    exemplar_id: Optional[str] = None


@dataclass
class Manifest:
    """Ordered frame metadata (no pixels) plus the sampling and preprocessing parameters.

    Attributes:
        entries (pl.DataFrame): One row per frame with the columns of `MANIFEST_SCHEMA`, chronological.
        fps (float): Rate the frames were sampled at.
        preprocessing (dict): Resize/crop parameters used.
    """

    entries: pl.DataFrame
    fps: float
    preprocessing: dict = field(default_factory=dict)

    def __post_init__(self):
        self.entries = self.entries.select(
            [pl.col(name).cast(dtype) if name in self.entries.columns else pl.lit(None, dtype=dtype).alias(name)
             for name, dtype in MANIFEST_SCHEMA.items()]
        )
        self.validate()

    def __len__(self) -> int:
        return self.entries.height

    def validate(self) -> None:
        """Checks the manifest invariants.

        Raises:
            FormatError: If fps is not positive, timestamps are negative or frame ids do not increase.
        """
        if self.fps <= 0:
            raise FormatError(f"Manifest fps must be positive, got {self.fps}.")
        if self.entries.height == 0:
            return
        if self.entries["timestamp_s"].min() < 0:
            raise FormatError("Manifest contains negative timestamps.")
        frame_ids = self.entries["frame_id"].to_numpy()
        if np.any(np.diff(frame_ids) <= 0):
            raise FormatError("Manifest frame ids are not strictly increasing.")

    @property
    def frame_ids(self) -> np.ndarray:
        return self.entries["frame_id"].to_numpy()

    @property
    def recording_ids(self) -> np.ndarray:
        return self.entries["recording_id"].to_numpy()

    def labeled(self) -> "Manifest":
        """Returns the manifest restricted to frames that carry a label."""
        return Manifest(entries=self.entries.filter(pl.col("label").is_not_null()), fps=self.fps,
                        preprocessing=self.preprocessing)

    def resample(self, fps: float) -> "Manifest":
        """Keeps every k-th frame, k = self.fps / fps, giving a lower sampling rate.

        Raises:
            ParameterError: If fps is not the manifest rate divided by a positive integer.
        """
        if not 0 < fps <= self.fps:
            raise ParameterError(f"Cannot resample a {self.fps}-fps manifest to {fps} fps.")
        step = int(round(self.fps / fps))
        if abs(self.fps / fps - step) > 1e-6:
            raise ParameterError(f"{fps} fps is not a whole-number fraction of the manifest rate {self.fps} fps.")
        if step == 1:
            return self
        entries = self.entries.gather_every(step)
        return Manifest(entries=entries, fps=self.fps / step, preprocessing=self.preprocessing)

    def label_vocabulary(self) -> List[str]:
        return sorted(self.entries["label"].drop_nulls().unique().to_list())

    def label_ids(self) -> tuple[np.ndarray, List[str]]:
        """Returns each frame's index into the label vocabulary (-1 when unlabeled) and the vocabulary."""
        vocabulary = self.label_vocabulary()
        lookup = {label: index for index, label in enumerate(vocabulary)}
        ids = np.array([lookup.get(label, -1) for label in self.entries["label"].to_list()], dtype=np.int64)
        return ids, vocabulary

    def exemplar_ids(self) -> Optional[np.ndarray]:
        """Exemplar id of every frame, or None when no frame has one."""
        if self.entries["exemplar_id"].null_count() == self.entries.height:
            return None
        return np.asarray(self.entries["exemplar_id"].fill_null("").to_list(), dtype=object)

    def write(self, path_file: Path) -> None:
        """Writes the manifest as a header line followed by one JSON record per frame."""
        path_file.parent.mkdir(parents=True, exist_ok=True)
        header = {"format": MANIFEST_FORMAT, "fps": self.fps, "preprocessing": self.preprocessing}
        body = self.entries.write_ndjson() if self.entries.height else ""
        with open(path_file, "w", encoding="utf-8") as file:
            file.write(json.dumps(header, sort_keys=True) + "\n")
            file.write(body)
        logger.info(f"Manifest '{path_file}' with {self.entries.height} frames written.")

    @classmethod
    def read(cls, path_file: Path) -> "Manifest":
        """Reads a manifest written by `write`.

        Raises:
            DataFileNotFoundError: If the file does not exist.
            FormatError: If the header is missing or of another format.
        """
        if not path_file.exists():
            raise DataFileNotFoundError(f"No manifest file '{path_file}' found.")
        with open(path_file, encoding="utf-8") as file:
            header_line = file.readline()
            body = file.read()
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"Manifest '{path_file}' has no header line.") from exc
        if header.get("format") != MANIFEST_FORMAT:
            raise FormatError(f"Manifest '{path_file}' has unknown format '{header.get('format')}'.")
        if body.strip():
            entries = pl.read_ndjson(io.BytesIO(body.encode("utf-8")), schema=MANIFEST_SCHEMA)
        else:
            entries = pl.DataFrame(schema=MANIFEST_SCHEMA)
        return cls(entries=entries, fps=header["fps"], preprocessing=header.get("preprocessing", {}))


class ShardWriter:
    """Collects frames and writes them as fixed-size compressed `.npz` shards.

    Each shard holds `frames` (N×H×W×3 uint8) and `frame_ids` (the shard index). Manifest
    rows returned by `add` point at the shard file and the offset within it.
    """

    def __init__(self, dir_output: Path, shard_size: int = 4096):
        self.dir_output = dir_output
        self.dir_shards = dir_output / "shards"
        self.dir_shards.mkdir(parents=True, exist_ok=True)
        self.shard_size = shard_size
        self.rows: List[dict] = []
        self._frames: List[np.ndarray] = []
        self._frame_ids: List[int] = []
        self._n_shards = 0

    def _shard_path(self) -> str:
        return f"shards/shard_{self._n_shards:05d}.npz"

    def add(self, record: FrameRecord) -> None:
        self.rows.append(
            {
                "frame_id": record.frame_id,
                "recording_id": record.recording_id,
                "timestamp_s": record.timestamp_s,
                "label": record.label,
                "exemplar_id": record.exemplar_id,
                "shard_path": self._shard_path(),
                "shard_offset": len(self._frames),
            }
        )
        self._frames.append(np.asarray(record.image, dtype=np.uint8))
        self._frame_ids.append(record.frame_id)
        if len(self._frames) == self.shard_size:
            self._flush()

    def add_all(self, records: Iterable[FrameRecord]) -> None:
        for record in records:
            self.add(record)

    def _flush(self) -> None:
        if not self._frames:
            return
        np.savez_compressed(
            self.dir_output / self._shard_path(),
            frames=np.stack(self._frames),
            frame_ids=np.asarray(self._frame_ids, dtype=np.int64),
        )
        self._n_shards += 1
        self._frames, self._frame_ids = [], []

    def close(self, fps: float, preprocessing: dict) -> Manifest:
        """Flushes the last shard and returns the manifest of everything written."""
        self._flush()
        entries = pl.DataFrame(self.rows, schema=MANIFEST_SCHEMA) if self.rows else pl.DataFrame(schema=MANIFEST_SCHEMA)
        logger.info(f"{self._n_shards} shards written to '{self.dir_shards}'.")
        return Manifest(entries=entries, fps=fps, preprocessing=preprocessing)


class FrameStore:
    """Loads the pixels of a manifest's frames from its shards, in manifest order."""

    def __init__(self, manifest: Manifest, dir_root: Path):
        self.manifest = manifest
        self.dir_root = dir_root

    def load(self) -> np.ndarray:
        """Returns all frames as an N×H×W×3 uint8 array aligned with the manifest rows.

        Raises:
            DataFileNotFoundError: If a shard is missing.
            FormatError: If a shard's index disagrees with the manifest.
        """
        if len(self.manifest) == 0:
            return np.zeros((0, 0, 0, 3), dtype=np.uint8)
        frames = []
        entries = self.manifest.entries.with_row_index("row")
        for (shard_path,), group in entries.group_by(["shard_path"], maintain_order=True):
            path_shard = self.dir_root / shard_path
            if not path_shard.exists():
                raise DataFileNotFoundError(f"No shard file '{path_shard}' found.")
            with np.load(path_shard) as shard:
                offsets = group["shard_offset"].to_numpy()
                if not np.array_equal(shard["frame_ids"][offsets], group["frame_id"].to_numpy()):
                    raise FormatError(f"Shard '{path_shard}' does not match the manifest.")
                frames.append((group["row"].to_numpy(), shard["frames"][offsets]))
        stacked = np.concatenate([chunk for _, chunk in frames])
        order = np.argsort(np.concatenate([rows for rows, _ in frames]), kind="stable")
        return stacked[order]
