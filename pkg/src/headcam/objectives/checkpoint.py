import io
import json
import logging
import os
import tempfile
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import torch

from headcam.errors import DataFileNotFoundError, FormatError

from .backbones import Backbone, build_backbone

logger = logging.getLogger(__name__)

FORMAT_VERSION = "1.0"


@dataclass
class Checkpoint:
    """Trained backbone parameters plus everything needed to describe or resume the run.

    Attributes:
        architecture_id (str): Registered backbone architecture.
        embedding_dim (int): Embedding size D.
        backbone_state (dict): Backbone state dict.
        config (dict): Training configuration as plain values.
        seed (int): Seed the run was started with.
        epoch (int): Number of completed epochs.
        metrics (dict): Objective metrics of the last completed epoch.
        head_state (dict | None): Temporal classifier head, for the temporal classification objective.
        contrastive_state (dict | None): Key encoder, projection head and queue, for contrastive objectives.
        optimizer_state (dict | None): Optimizer state for resuming.
        path (Path | None): File the checkpoint was read from or written to.
    """

    architecture_id: str
    embedding_dim: int
    backbone_state: dict
    config: dict = field(default_factory=dict)
    seed: int = 0
    epoch: int = 0
    metrics: dict = field(default_factory=dict)
    head_state: Optional[dict] = None
    contrastive_state: Optional[dict] = None
    optimizer_state: Optional[dict] = None
    path: Optional[Path] = None

    @property
    def id(self) -> str:
        objective = self.config.get("objective", "trained")
        return f"{objective}-{self.architecture_id}-seed{self.seed}-epoch{self.epoch}"

    def backbone(self) -> Backbone:
        """Rebuilds the backbone with the stored parameters, in inference mode."""
        backbone = build_backbone(self.architecture_id, embedding_dim=self.embedding_dim)
        backbone.load_state_dict(self.backbone_state)
        return backbone.eval()

    def metadata(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "architecture_id": self.architecture_id,
            "embedding_dim": self.embedding_dim,
            "config": self.config,
            "seed": self.seed,
            "epoch": self.epoch,
            "metrics": self.metrics,
        }


def save_checkpoint(checkpoint: Checkpoint, path_file: Path) -> Path:
    """Writes the checkpoint archive atomically: a temporary file in the same directory is renamed over the target.

    The archive holds `metadata.json` and `state.pt` with the state dicts.
    """
    path_file.parent.mkdir(parents=True, exist_ok=True)
    buffer = io.BytesIO()
    torch.save(
        {
            "backbone": checkpoint.backbone_state,
            "head": checkpoint.head_state,
            "contrastive": checkpoint.contrastive_state,
            "optimizer": checkpoint.optimizer_state,
        },
        buffer,
    )
    fd, path_tmp = tempfile.mkstemp(dir=path_file.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as file, zipfile.ZipFile(file, "w", compression=zipfile.ZIP_STORED) as archive:
            archive.writestr("metadata.json", json.dumps(checkpoint.metadata(), indent=2, sort_keys=True))
            archive.writestr("state.pt", buffer.getvalue())
        os.replace(path_tmp, path_file)
    except BaseException:
        Path(path_tmp).unlink(missing_ok=True)
        raise
    checkpoint.path = path_file
    logger.info(f"Checkpoint '{path_file}' written at epoch {checkpoint.epoch}.")
    return path_file


def load_checkpoint(path_file: Path) -> Checkpoint:
    """Reads a checkpoint archive.

    Raises:
        DataFileNotFoundError: If the file does not exist.
        FormatError: If the archive is malformed or has an unknown major format version.
    """
    if not path_file.exists():
        raise DataFileNotFoundError(f"No checkpoint file '{path_file}' found.")
    try:
        with zipfile.ZipFile(path_file) as archive:
            metadata = json.loads(archive.read("metadata.json"))
            state_bytes = archive.read("state.pt")
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError) as exc:
        raise FormatError(f"Checkpoint '{path_file}' is not a valid archive.") from exc
    major = str(metadata.get("format_version", "")).split(".")[0]
    if major != FORMAT_VERSION.split(".")[0]:
        raise FormatError(
            f"Checkpoint '{path_file}' has format version '{metadata.get('format_version')}', "
            f"this reader supports {FORMAT_VERSION.split('.')[0]}.x."
        )
    state = torch.load(io.BytesIO(state_bytes), map_location="cpu", weights_only=True)
    return Checkpoint(
        architecture_id=metadata["architecture_id"],
        embedding_dim=metadata["embedding_dim"],
        backbone_state=state["backbone"],
        config=metadata.get("config", {}),
        seed=metadata.get("seed", 0),
        epoch=metadata.get("epoch", 0),
        metrics=metadata.get("metrics", {}),
        head_state=state.get("head"),
        contrastive_state=state.get("contrastive"),
        optimizer_state=state.get("optimizer"),
        path=path_file,
    )
