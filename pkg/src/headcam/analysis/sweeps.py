import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
import polars as pl

from headcam.errors import ConfigError
from headcam.fixtures import EpisodicWorldConfig, generate_episodic
from headcam.importers import assign_temporal_classes
from headcam.objectives import Objective, TrainConfig, train
from headcam.probing import ProbeConfig, SplitSpec, evaluate_probe, extract_embeddings

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SweepConfig:
    """Grid of data and augmentation factors for temporal classification.

    Attributes:
        fps_values (Tuple[float, ...]): Sampling rates; each must not exceed the world's fps.
        segment_lengths (Tuple[float, ...]): Temporal class durations in seconds.
        augment_values (Tuple[bool, ...]): Whether augmentation is enabled.
        seeds (Tuple[int, ...]): Seeds of world generation, training and splitting.
        world (EpisodicWorldConfig): Synthetic corpus every cell trains on.
        train (TrainConfig): Training settings; objective, segment length, seed and augmentation are set per cell.
        probe (ProbeConfig): Readout settings for the ground-truth episode probe.
    """

    fps_values: Tuple[float, ...] = (1.0,)
    segment_lengths: Tuple[float, ...] = (200.0,)
    augment_values: Tuple[bool, ...] = (True,)
    seeds: Tuple[int, ...] = (0,)
    world: EpisodicWorldConfig = field(default_factory=EpisodicWorldConfig)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=5, batch_size=128, lr=0.001))
    probe: ProbeConfig = field(default_factory=lambda: ProbeConfig(lr=0.01, epochs=100, batch_size=256))

    def __post_init__(self):
        if not (self.fps_values and self.segment_lengths and self.augment_values and self.seeds):
            raise ConfigError("Every sweep axis needs at least one value.")


def run_sweep(config: SweepConfig, path_output: Optional[Path] = None) -> pl.DataFrame:
    """Trains one temporal classification model per grid cell and probes it on the ground-truth episodes.

    Args:
        config (SweepConfig): Grid and fixed settings.
        path_output (Path | None): CSV file receiving the table.

    Returns:
        pl.DataFrame: One row per (seed, fps, segment_length_s, augment) with top1 and majority.
    """
    rows = []
    for seed in config.seeds:
        frames_full, manifest_full, _ = generate_episodic(replace(config.world, seed=seed))
        for fps in config.fps_values:
            manifest = manifest_full.resample(fps)
            frames = frames_full[np.searchsorted(manifest_full.frame_ids, manifest.frame_ids)]
            labels, vocabulary = manifest.label_ids()
            for segment_length_s in config.segment_lengths:
                labeling = assign_temporal_classes(manifest, segment_length_s=segment_length_s)
                for augment in config.augment_values:
                    train_config = replace(
                        config.train,
                        objective=Objective.TEMPORAL_CLASSIFICATION,
                        fps=None,
                        segment_length_s=segment_length_s,
                        seed=seed,
                        augment=replace(config.train.augment, enabled=augment),
                    )
                    checkpoint = train(train_config, frames, manifest, labeling)
                    embeddings = extract_embeddings(
                        checkpoint.backbone(), frames, labels=labels, frame_ids=manifest.frame_ids,
                        vocabulary=vocabulary, name=f"tc-fps{fps}-seg{segment_length_s}-aug{int(augment)}",
                    )
                    result = evaluate_probe(
                        embeddings, SplitSpec(seed=seed), replace(config.probe, seed=seed), dataset_name="episodic"
                    )
                    rows.append(
                        {
                            "seed": seed,
                            "fps": fps,
                            "segment_length_s": segment_length_s,
                            "augment": augment,
                            "top1": result.top1,
                            "majority": result.majority,
                            "n_train": result.n_train,
                            "n_test": result.n_test,
                        }
                    )
                    logger.info(
                        f"Sweep cell fps {fps}, segment {segment_length_s} s, augment {augment}, seed {seed}: "
                        f"top-1 {result.top1:.4f}."
                    )
    df_sweep = pl.DataFrame(rows)
    if path_output is not None:
        path_output.parent.mkdir(parents=True, exist_ok=True)
        df_sweep.write_csv(path_output)
        logger.info(f"Sweep table written to '{path_output}'.")
    return df_sweep
