import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional

import polars as pl

from headcam.errors import DataFileNotFoundError, FormatError, ParameterError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AnnotationCell:
    """Labels transcribed for the frames between two consecutive time stamps of a recording."""

    recording_id: str
    start_s: float
    end_s: float
    labels: tuple


class SynonymTable:
    """Maps label variants to a canonical label, read from a two-column text file."""

    def __init__(self, mapping: Optional[Dict[str, str]] = None):
        self.mapping = {normalize_text(k): normalize_text(v) for k, v in (mapping or {}).items()}

    @classmethod
    def from_file(cls, path_file: Path) -> "SynonymTable":
        """Loads `variant,canonical` pairs (no header line).

        Raises:
            DataFileNotFoundError: If the file does not exist.
        """
        if not path_file.exists():
            raise DataFileNotFoundError(f"No synonym file '{path_file}' found.")
        df = pl.read_csv(path_file, has_header=False, new_columns=["variant", "canonical"])
        return cls(dict(zip(df["variant"].to_list(), df["canonical"].to_list())))

    def __call__(self, label: str) -> str:
        return self.mapping.get(label, label)


def normalize_text(label: str) -> str:
    return re.sub(r"\s+", " ", label.strip().lower())


def normalize_label(label: str, synonyms: Optional[SynonymTable] = None) -> str:
    """Lowercases, trims and collapses whitespace, then applies the synonym table."""
    label = normalize_text(label)
    return synonyms(label) if synonyms is not None else label


class AnnotationFile:
    """Handles loading transcribed annotation cells from a CSV file.

    The file has the columns `recording_id`, `start_s`, `end_s` and `labels`, where `labels`
    lists the objects looked at, separated by `|`, in transcription order.
    """

    def __init__(self, path_file: Path):
        """Initializes the AnnotationFile by loading the annotation cells.

        Args:
            path_file (Path): Path to the annotation CSV file.

        Raises:
            DataFileNotFoundError: If the file does not exist.
            FormatError: If a required column is missing.
        """
        if not path_file.exists():
            raise DataFileNotFoundError(f"No annotation file '{path_file}' found.")
        self.df_cells = pl.read_csv(path_file, schema_overrides={"recording_id": pl.Utf8, "labels": pl.Utf8})
        missing = {"recording_id", "start_s", "end_s", "labels"} - set(self.df_cells.columns)
        if missing:
            raise FormatError(f"Annotation file '{path_file}' lacks columns {sorted(missing)}.")

    @property
    def cells(self) -> List[AnnotationCell]:
        """Returns the annotation cells, labels split on `|` and stripped."""
        df = self.df_cells.with_columns(pl.col("labels").fill_null("").str.split("|"))
        return [
            AnnotationCell(
                recording_id=row["recording_id"],
                start_s=float(row["start_s"]),
                end_s=float(row["end_s"]),
                labels=tuple(label.strip() for label in row["labels"] if label.strip()),
            )
            for row in df.iter_rows(named=True)
        ]


def _cell_timestamps(cell: AnnotationCell, fps: float) -> List[float]:
    first = math.ceil(cell.start_s * fps - 1e-9)
    last = math.ceil(cell.end_s * fps - 1e-9)
    return [k / fps for k in range(first, last)]


def _labeled_frames(cells: List[AnnotationCell], fps: float, synonyms: Optional[SynonymTable]) -> pl.DataFrame:
    rows = []
    for cell in cells:
        label = normalize_label(cell.labels[0], synonyms=synonyms)
        rows.extend(
            {"recording_id": cell.recording_id, "timestamp_s": timestamp, "label": label}
            for timestamp in _cell_timestamps(cell, fps)
        )
    schema = {"recording_id": pl.Utf8, "timestamp_s": pl.Float64, "label": pl.Utf8}
    return pl.DataFrame(rows, schema=schema).unique(subset=["recording_id", "timestamp_s"], keep="first",
                                                    maintain_order=True)


def curate_labels(
    raw_cells: Iterable[AnnotationCell],
    min_frames: int = 100,
    top_k: int = 30,
    drop_top: int = 2,
    fps: float = 1.0,
    synonyms: Optional[SynonymTable] = None,
    count_fps: Optional[float] = None,
) -> pl.DataFrame:
    """Turns noisy annotation cells into a labeled frame table.

    Each cell contributes its frames sampled at `fps`, labeled with the cell's first label after
    normalization. Only the `top_k` most frequent classes are kept, the `drop_top` most frequent
    of those are removed, and finally classes with fewer than `min_frames` frames are removed.
    Class sizes are counted at `count_fps`, so the thresholds do not depend on the sampling rate.

    Args:
        raw_cells (Iterable[AnnotationCell]): Annotation cells.
        min_frames (int): Minimum frames a surviving class must have.
        top_k (int): Number of most frequent classes considered.
        drop_top (int): Number of most frequent classes removed from those.
        fps (float): Sampling rate of the labeled frames.
        synonyms (SynonymTable | None): Variant to canonical label mapping.
        count_fps (float | None): Rate at which class sizes are counted for `top_k` and `min_frames`;
            defaults to `fps`.

    Returns:
        pl.DataFrame: Columns `recording_id`, `timestamp_s`, `label`; may be empty.

    Raises:
        ParameterError: If min_frames < 1 or top_k/drop_top are negative.
    """
    if min_frames < 1:
        raise ParameterError(f"min_frames must be at least 1, got {min_frames}.")
    if top_k < 0 or drop_top < 0:
        raise ParameterError("top_k and drop_top must be non-negative.")
    cells = [cell for cell in raw_cells if cell.labels]
    df_frames = _labeled_frames(cells, fps, synonyms)
    df_counted = df_frames if count_fps in (None, fps) else _labeled_frames(cells, count_fps, synonyms)
    counts = df_counted.group_by("label").len().sort(["len", "label"], descending=[True, False])
    logger.info(f"{counts.height} unique labels after normalization.")
    kept = counts.head(top_k).slice(drop_top).filter(pl.col("len") >= min_frames)
    df_curated = df_frames.filter(pl.col("label").is_in(kept["label"].to_list())).sort(
        ["recording_id", "timestamp_s"]
    )
    logger.info(f"{df_curated.height} frames in {kept.height} classes survive curation.")
    return df_curated
