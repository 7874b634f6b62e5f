import logging
import time
from dataclasses import asdict, dataclass, field
from enum import StrEnum
from pathlib import Path
from typing import List, Optional

import numpy as np
import polars as pl
import torch
import torch.nn as nn
from torch.utils.data import DataLoader

from headcam.augment import AugmentConfig, ContrastiveAugmentConfig, FramePipeline
from headcam.errors import ConfigError, ContractError, TrainingDivergedError
from headcam.importers import Manifest, TemporalLabeling

from .backbones import Backbone, build_backbone
from .checkpoint import Checkpoint, save_checkpoint
from .contrastive import MomentumContrast
from .datasets import TemporalClassDataset, TwoViewDataset
from .losses import temporal_classification_loss
from .pairs import temporal_positive_pairs

logger = logging.getLogger(__name__)


class Objective(StrEnum):
    TEMPORAL_CLASSIFICATION = "temporal_classification"
    STATIC_CONTRASTIVE = "static_contrastive"
    TEMPORAL_CONTRASTIVE = "temporal_contrastive"

    @property
    def is_contrastive(self) -> bool:
        return self is not Objective.TEMPORAL_CLASSIFICATION


@dataclass(frozen=True)
class TrainConfig:
    """Settings of one self-supervised training run.

    Attributes:
        objective (Objective): Which of the three objectives to optimize.
        fps (float | None): Rate to resample the manifest to before training; None keeps the manifest rate.
        segment_length_s (float): Duration of a temporal class.
        lr (float): Adam learning rate.
        batch_size (int): Frames per optimization step.
        epochs (int): Passes over the frames.
        seed (int): Seed for initialization, shuffling and augmentation.
        augment (AugmentConfig): Photometric augmentation.
        contrastive_augment (ContrastiveAugmentConfig): Geometric augmentation for contrastive objectives.
        backbone (str): Registered backbone architecture.
        embedding_dim (int | None): Embedding size, None for the architecture default.
        weights (str | None): Optional initial weights file for the backbone.
        queue_size (int): Negative queue size K before scaling to the corpus.
        proj_dim (int): Contrastive space dimension d.
        momentum (float): Key encoder momentum m.
        temperature (float): Contrastive temperature τ.
        workers (int): Data loading processes.
    """

    objective: Objective = Objective.TEMPORAL_CLASSIFICATION
    fps: Optional[float] = None
    segment_length_s: float = 288.0
    lr: float = 0.0005
    batch_size: int = 732
    epochs: int = 6
    seed: int = 0
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    contrastive_augment: ContrastiveAugmentConfig = field(default_factory=ContrastiveAugmentConfig)
    backbone: str = "reference_cnn"
    embedding_dim: Optional[int] = None
    weights: Optional[str] = None
    queue_size: int = 65536
    proj_dim: int = 128
    momentum: float = 0.999
    temperature: float = 0.2
    workers: int = 0

    def __post_init__(self):
        object.__setattr__(self, "objective", Objective(self.objective))
        if self.lr < 0:
            raise ConfigError(f"train.lr must be non-negative, got {self.lr}.")
        if self.epochs < 1:
            raise ConfigError(f"train.epochs must be at least 1, got {self.epochs}.")
        if self.batch_size < 1 or (self.objective.is_contrastive and self.batch_size < 2):
            raise ConfigError(f"train.batch_size {self.batch_size} is too small for {self.objective}.")
        if self.fps is not None and self.fps <= 0:
            raise ConfigError(f"train.fps must be positive, got {self.fps}.")
        if self.segment_length_s <= 0:
            raise ConfigError(f"train.segment_length_s must be positive, got {self.segment_length_s}.")
        if not 0.0 <= self.momentum <= 1.0:
            raise ConfigError(f"train.momentum must lie in [0, 1], got {self.momentum}.")
        if self.temperature <= 0 or self.queue_size < 1 or self.proj_dim < 1:
            raise ConfigError("train.temperature, queue_size and proj_dim must be positive.")


class TemporalClassifierHead(nn.Linear):
    """Linear map from embeddings to temporal class scores; discarded after training."""

    def __init__(self, embedding_dim: int, n_classes: int):
        super().__init__(embedding_dim, n_classes)
        self.n_classes = n_classes


class TemporalClassifier(nn.Module):
    def __init__(self, backbone: Backbone, head: TemporalClassifierHead):
        super().__init__()
        self.backbone = backbone
        self.head = head

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        return self.head(self.backbone(images))


def _build_backbone(config: TrainConfig) -> Backbone:
    kwargs = {"path_weights": Path(config.weights)} if config.weights else {}
    return build_backbone(config.backbone, embedding_dim=config.embedding_dim, seed=config.seed, **kwargs)


def _epoch_order(seed: int, epoch: int, n: int) -> List[int]:
    return np.random.default_rng([seed, epoch]).permutation(n).tolist()


def _epoch_lr(config: TrainConfig, epoch: int) -> float:
    if config.objective.is_contrastive and config.epochs > 1 and epoch == config.epochs - 1:
        return config.lr * 0.1
    return config.lr


class Trainer:
    """Runs one of the three objectives over a frame corpus.

    The temporal classification objective trains the backbone plus a linear head on temporal
    class ids. The contrastive objectives train a momentum-contrast encoder pair; the static
    variant contrasts two augmentations of the same frame, the temporal variant an augmentation
    of the frame against one of its immediate neighbours.
    """

    def __init__(
        self,
        config: TrainConfig,
        frames: np.ndarray,
        manifest: Manifest,
        labeling: Optional[TemporalLabeling] = None,
        dir_output: Optional[Path] = None,
    ):
        if len(frames) != len(manifest):
            raise ContractError(f"{len(frames)} frames for a manifest of {len(manifest)} entries.")
        if config.objective is Objective.TEMPORAL_CLASSIFICATION and labeling is None:
            raise ConfigError("The temporal_classification objective requires a temporal labeling.")
        if config.lr == 0:
            logger.warning("Learning rate is 0; the trunk parameters will not change.")
        self.config = config
        self.frames = frames
        self.manifest = manifest
        self.labeling = labeling
        self.dir_output = dir_output
        self.path_checkpoint = dir_output / "checkpoint.zip" if dir_output is not None else None
        self.path_log = dir_output / "training_log.ndjson" if dir_output is not None else None
        self.backbone = _build_backbone(config)
        self.pipeline = FramePipeline(
            augment=config.augment,
            contrastive=config.contrastive_augment if config.objective.is_contrastive else None,
        )
        if config.objective is Objective.TEMPORAL_CLASSIFICATION:
            self._setup_temporal_classification()
        else:
            self._setup_contrastive()
        self.optimizer = torch.optim.Adam(self.trainable.parameters(), lr=config.lr)
        self.start_epoch = 0
        self.step = 0
        self.last_checkpoint: Optional[Path] = None
        self.metrics: dict = {}

    def _setup_temporal_classification(self) -> None:
        positions = np.searchsorted(self.manifest.frame_ids, self.labeling.frame_ids)
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(self.config.seed + 1)
            head = TemporalClassifierHead(self.backbone.embedding_dim, self.labeling.n_classes)
        self.model = TemporalClassifier(self.backbone, head)
        self.trainable = self.model
        self.dataset = TemporalClassDataset(
            self.frames[positions], self.labeling.frame_ids, self.labeling.class_ids, self.pipeline, self.config.seed
        )
        self.batch_size = self.config.batch_size

    def _setup_contrastive(self) -> None:
        n_frames = len(self.manifest)
        queue_size = min(self.config.queue_size, n_frames // 2)
        if queue_size < 1:
            raise ContractError(f"Contrastive training needs at least 2 frames, got {n_frames}.")
        if queue_size < self.config.queue_size:
            logger.info(f"Queue scaled from {self.config.queue_size} to {queue_size} keys for {n_frames} frames.")
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(self.config.seed + 1)
            self.model = MomentumContrast(
                self.backbone,
                queue_size=queue_size,
                proj_dim=self.config.proj_dim,
                momentum=self.config.momentum,
                temperature=self.config.temperature,
                seed=self.config.seed,
            )
        self.trainable = self.model.encoder_q
        self.dataset = TwoViewDataset(self.frames, self.manifest.frame_ids, self.pipeline, self.config.seed)
        # Every batch of keys must fit in the queue
        self.batch_size = min(self.config.batch_size, queue_size)
        if self.batch_size < self.config.batch_size:
            logger.info(f"Batch size capped at the queue size {queue_size}.")

    def resume(self, checkpoint: Checkpoint) -> None:
        """Restores parameters, optimizer and queue so training continues after `checkpoint.epoch`.

        Raises:
            ConfigError: If the checkpoint was trained with another objective or backbone.
        """
        if checkpoint.config.get("objective") != str(self.config.objective):
            raise ConfigError(
                f"Checkpoint objective '{checkpoint.config.get('objective')}' differs from '{self.config.objective}'."
            )
        if checkpoint.architecture_id != self.backbone.architecture_id:
            raise ConfigError(f"Checkpoint backbone '{checkpoint.architecture_id}' differs from '{self.config.backbone}'.")
        self.backbone.load_state_dict(checkpoint.backbone_state)
        if self.config.objective is Objective.TEMPORAL_CLASSIFICATION:
            self.model.head.load_state_dict(checkpoint.head_state)
        else:
            self.model.load_contrastive_state(checkpoint.contrastive_state)
        if checkpoint.optimizer_state is not None:
            self.optimizer.load_state_dict(checkpoint.optimizer_state)
        self.start_epoch = checkpoint.epoch
        self.step = int(checkpoint.metrics.get("step", 0))
        self.metrics = dict(checkpoint.metrics)
        self.last_checkpoint = checkpoint.path
        logger.info(f"Resuming from '{checkpoint.path}' after epoch {checkpoint.epoch}.")

    def _loader(self, epoch: int) -> DataLoader:
        self.dataset.set_epoch(epoch)
        if self.config.objective is Objective.TEMPORAL_CONTRASTIVE:
            rng = np.random.default_rng([self.config.seed, epoch, 1])
            _, positives = temporal_positive_pairs(np.arange(len(self.manifest)), self.manifest, rng)
            self.dataset.set_positives(positives)
        return DataLoader(
            self.dataset,
            batch_size=self.batch_size,
            sampler=_epoch_order(self.config.seed, epoch, len(self.dataset)),
            num_workers=self.config.workers,
        )

    def _train_step(self, batch) -> tuple[torch.Tensor, Optional[torch.Tensor]]:
        if self.config.objective is Objective.TEMPORAL_CLASSIFICATION:
            images, class_ids = batch
            return temporal_classification_loss(self.model(images), class_ids)
        view_q, view_k = batch
        return self.model(view_q, view_k), None

    def run(self) -> Checkpoint:
        """Trains from `start_epoch` to `config.epochs`, checkpointing after every epoch.

        Raises:
            TrainingDivergedError: If a loss becomes NaN or infinite.
        """
        time_start = time.monotonic()
        checkpoint = self._checkpoint()
        for epoch in range(self.start_epoch, self.config.epochs):
            lr = _epoch_lr(self.config, epoch)
            for group in self.optimizer.param_groups:
                group["lr"] = lr
            self.model.train()
            records = []
            for batch in self._loader(epoch):
                loss, accuracy = self._train_step(batch)
                if not torch.isfinite(loss):
                    raise TrainingDivergedError(
                        f"Loss became {loss.item()} at step {self.step} of epoch {epoch}.",
                        path_checkpoint=self.last_checkpoint,
                    )
                self.optimizer.zero_grad()
                loss.backward()
                self.optimizer.step()
                records.append(
                    {
                        "step": self.step,
                        "epoch": epoch,
                        "loss": float(loss.item()),
                        "accuracy": None if accuracy is None else float(accuracy.item()),
                        "lr": lr,
                        "n": len(batch[0]),
                        "wall_time": time.monotonic() - time_start,
                    }
                )
                self.step += 1
            self.metrics = self._epoch_metrics(records)
            self._append_log(records)
            logger.info(
                f"Epoch {epoch + 1}/{self.config.epochs}: loss {self.metrics['loss']:.4f}"
                + (f", accuracy {self.metrics['accuracy']:.3f}" if self.metrics.get("accuracy") is not None else "")
            )
            checkpoint = self._checkpoint(epoch=epoch + 1)
            if self.path_checkpoint is not None:
                self.last_checkpoint = save_checkpoint(checkpoint, self.path_checkpoint)
        self.backbone.eval()
        return checkpoint

    def _epoch_metrics(self, records: List[dict]) -> dict:
        if not records:
            raise ContractError("An epoch produced no batches.")
        df = pl.DataFrame(records)
        weights = df["n"] / df["n"].sum()
        accuracy = None if df["accuracy"].null_count() else float((df["accuracy"] * weights).sum())
        return {"loss": float((df["loss"] * weights).sum()), "accuracy": accuracy, "step": self.step}

    def _append_log(self, records: List[dict]) -> None:
        if self.path_log is None or not records:
            return
        self.path_log.parent.mkdir(parents=True, exist_ok=True)
        df = pl.DataFrame(records).drop("n")
        with open(self.path_log, "a", encoding="utf-8") as file:
            file.write(df.write_ndjson())

    def _checkpoint(self, epoch: Optional[int] = None) -> Checkpoint:
        is_tc = self.config.objective is Objective.TEMPORAL_CLASSIFICATION
        return Checkpoint(
            architecture_id=self.backbone.architecture_id,
            embedding_dim=self.backbone.embedding_dim,
            backbone_state={k: v.detach().clone() for k, v in self.backbone.state_dict().items()},
            config=asdict(self.config),
            seed=self.config.seed,
            epoch=self.start_epoch if epoch is None else epoch,
            metrics=dict(self.metrics),
            head_state=self.model.head.state_dict() if is_tc else None,
            contrastive_state=None if is_tc else self.model.contrastive_state(),
            optimizer_state=self.optimizer.state_dict(),
        )


def train(
    config: TrainConfig,
    frames: np.ndarray,
    manifest: Manifest,
    labeling: Optional[TemporalLabeling] = None,
    dir_output: Optional[Path] = None,
    resume: Optional[Checkpoint] = None,
) -> Checkpoint:
    """Trains a backbone with the configured objective.

    Args:
        config (TrainConfig): Objective and hyperparameters.
        frames (np.ndarray): N×H×W×3 uint8 frames aligned with the manifest rows.
        manifest (Manifest): Chronological frame metadata.
        labeling (TemporalLabeling | None): Temporal classes, required for temporal classification.
        dir_output (Path | None): Receives `checkpoint.zip` and `training_log.ndjson`.
        resume (Checkpoint | None): Continue a previous run of the same configuration.

    Returns:
        Checkpoint: Backbone, head or contrastive state, config, epoch count and final metrics.

    Raises:
        ConfigError: If the labeling is missing for temporal classification.
        TrainingDivergedError: If the loss stops being finite.
    """
    trainer = Trainer(config=config, frames=frames, manifest=manifest, labeling=labeling, dir_output=dir_output)
    if resume is not None:
        trainer.resume(resume)
    return trainer.run()
