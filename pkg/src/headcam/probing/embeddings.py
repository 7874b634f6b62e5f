import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
import torch

from headcam.augment import NormalizationConstants, normalize, to_tensor
from headcam.errors import ContractError, DataFileNotFoundError, FormatError
from headcam.objectives import Backbone

logger = logging.getLogger(__name__)

EMBEDDINGS_FORMAT = "headcam-embeddings/1"


@dataclass
class EmbeddingSet:
    """Embeddings aligned with their labels, the input of probes and analyses.

    Attributes:
        embeddings (np.ndarray): N×D matrix.
        labels (np.ndarray): N category ids indexing `vocabulary`; -1 for unlabeled rows.
        frame_ids (np.ndarray): N frame ids.
        exemplar_ids (np.ndarray | None): N exemplar ids, when the frames have them.
        source (str): Checkpoint id or baseline name.
        vocabulary (List[str]): Category names by id.
    """

    embeddings: np.ndarray
    labels: np.ndarray
    frame_ids: np.ndarray
    exemplar_ids: Optional[np.ndarray] = None
    source: str = ""
    vocabulary: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.embeddings = np.asarray(self.embeddings, dtype=np.float64)
        if self.embeddings.ndim != 2:
            self.embeddings = self.embeddings.reshape(len(self.embeddings), -1)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.frame_ids = np.asarray(self.frame_ids, dtype=np.int64)
        if self.exemplar_ids is not None:
            self.exemplar_ids = np.asarray(self.exemplar_ids, dtype=object)
        n_rows = len(self.embeddings)
        lengths = [len(self.labels), len(self.frame_ids)]
        if self.exemplar_ids is not None:
            lengths.append(len(self.exemplar_ids))
        if any(length != n_rows for length in lengths):
            raise ContractError(f"Embedding set fields disagree in length: {n_rows} rows vs {lengths}.")
        if not np.all(np.isfinite(self.embeddings)):
            raise ContractError(f"Embedding set '{self.source}' contains NaN or infinite values.")

    def __len__(self) -> int:
        return len(self.embeddings)

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def subset(self, rows: np.ndarray) -> "EmbeddingSet":
        return EmbeddingSet(
            embeddings=self.embeddings[rows],
            labels=self.labels[rows],
            frame_ids=self.frame_ids[rows],
            exemplar_ids=None if self.exemplar_ids is None else self.exemplar_ids[rows],
            source=self.source,
            vocabulary=list(self.vocabulary),
        )

    def class_name(self, label: int) -> str:
        return self.vocabulary[label] if 0 <= label < len(self.vocabulary) else str(label)

    def save(self, path_file: Path) -> None:
        """Writes an `.npz` container with a JSON metadata entry and the dense matrix."""
        path_file.parent.mkdir(parents=True, exist_ok=True)
        metadata = {
            "format": EMBEDDINGS_FORMAT,
            "n": len(self),
            "d": self.dim,
            "source": self.source,
            "vocabulary": self.vocabulary,
        }
        arrays = {
            "metadata": np.array(json.dumps(metadata)),
            "embeddings": self.embeddings,
            "labels": self.labels,
            "frame_ids": self.frame_ids,
        }
        if self.exemplar_ids is not None:
            arrays["exemplar_ids"] = self.exemplar_ids.astype(str)
        with open(path_file, "wb") as file:
            np.savez_compressed(file, **arrays)
        logger.info(f"Embedding set '{self.source}' ({len(self)}×{self.dim}) written to '{path_file}'.")

    @classmethod
    def load(cls, path_file: Path) -> "EmbeddingSet":
        """Reads a container written by `save`.

        Raises:
            DataFileNotFoundError: If the file does not exist.
            FormatError: If the file has another format tag.
        """
        if not path_file.exists():
            raise DataFileNotFoundError(f"No embedding file '{path_file}' found.")
        with np.load(path_file, allow_pickle=False) as data:
            metadata = json.loads(str(data["metadata"]))
            if metadata.get("format") != EMBEDDINGS_FORMAT:
                raise FormatError(f"Embedding file '{path_file}' has unknown format '{metadata.get('format')}'.")
            return cls(
                embeddings=data["embeddings"],
                labels=data["labels"],
                frame_ids=data["frame_ids"],
                exemplar_ids=data["exemplar_ids"] if "exemplar_ids" in data else None,
                source=metadata["source"],
                vocabulary=metadata["vocabulary"],
            )


class BackboneExtractor:
    """Feature source running a frozen backbone on normalized center views of frames."""

    def __init__(self, backbone: Backbone, source: str = "", batch_size: int = 256,
                 constants: NormalizationConstants = NormalizationConstants()):
        self.backbone = backbone
        self.source = source or backbone.architecture_id
        self.batch_size = batch_size
        self.constants = constants

    def batches(self, frames: np.ndarray):
        for start in range(0, len(frames), self.batch_size):
            chunk = frames[start : start + self.batch_size]
            yield torch.stack([normalize(to_tensor(frame), self.constants) for frame in chunk])

    @torch.no_grad()
    def _run(self, frames: np.ndarray, spatial: bool) -> np.ndarray:
        was_training = self.backbone.training
        self.backbone.eval()
        try:
            outputs = []
            for images in self.batches(frames):
                embeddings, features = self.backbone.embed(images)
                outputs.append((features if spatial else embeddings).numpy())
        finally:
            self.backbone.train(was_training)
        return np.concatenate(outputs)

    def __call__(self, frames: np.ndarray) -> np.ndarray:
        if len(frames) == 0:
            return np.zeros((0, self.backbone.embedding_dim))
        embeddings = self._run(frames, spatial=False)
        if embeddings.shape[1] != self.backbone.embedding_dim:
            raise ContractError(
                f"Backbone '{self.source}' produced {embeddings.shape[1]}-D embeddings, "
                f"declared {self.backbone.embedding_dim}."
            )
        return embeddings

    def spatial_features(self, frames: np.ndarray) -> np.ndarray:
        """Returns the N×D×h×w final spatial feature stack."""
        return self._run(frames, spatial=True)

    def layer_responses(self, frames: np.ndarray, layer: str) -> np.ndarray:
        """Returns the N×F spatially averaged activations of a named layer."""
        if layer not in self.backbone.layer_names:
            raise ContractError(f"Backbone has no layer '{layer}'; choose from {self.backbone.layer_names}.")
        was_training = self.backbone.training
        self.backbone.eval()
        responses = []
        try:
            with torch.no_grad():
                for images in self.batches(frames):
                    responses.append(self.backbone.forward_taps(images)[layer].mean(dim=(2, 3)).numpy())
        finally:
            self.backbone.train(was_training)
        return np.concatenate(responses)


FeatureSource = Union[BackboneExtractor, Callable[[np.ndarray], np.ndarray]]


def extract_embeddings(
    source: Union[Backbone, FeatureSource],
    frames: np.ndarray,
    labels: Optional[Sequence[int]] = None,
    frame_ids: Optional[Sequence[int]] = None,
    exemplar_ids: Optional[Sequence[str]] = None,
    vocabulary: Optional[List[str]] = None,
    name: str = "",
) -> EmbeddingSet:
    """Embeds frames with a frozen backbone or a baseline feature extractor.

    Args:
        source: A backbone, a `BackboneExtractor` or a callable mapping N×H×W×3 frames to N×D features.
        frames (np.ndarray): N×H×W×3 uint8 preprocessed frames.
        labels: Category id of each frame; unlabeled (-1) when omitted.
        frame_ids: Frame ids; positions when omitted.
        exemplar_ids: Exemplar id of each frame, if any.
        vocabulary: Category names by id.
        name (str): Source name recorded in the set.

    Returns:
        EmbeddingSet: Row i embeds frame i.

    Raises:
        ContractError: If a backbone's output width differs from its declared dimension.
    """
    if isinstance(source, Backbone):
        source = BackboneExtractor(source, source=name)
    n_frames = len(frames)
    embeddings = source(frames)
    return EmbeddingSet(
        embeddings=embeddings,
        labels=np.full(n_frames, -1) if labels is None else labels,
        frame_ids=np.arange(n_frames) if frame_ids is None else frame_ids,
        exemplar_ids=exemplar_ids,
        source=name or getattr(source, "source", ""),
        vocabulary=list(vocabulary or []),
    )
