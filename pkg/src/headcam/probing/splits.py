import logging
from dataclasses import dataclass
from enum import StrEnum
from typing import Tuple, Union

import numpy as np

from headcam.errors import ConfigError, SplitError

from .embeddings import EmbeddingSet

logger = logging.getLogger(__name__)


class SplitKind(StrEnum):
    IID = "iid"
    SUBSAMPLE_IID = "subsample_iid"
    EXEMPLAR_HOLDOUT = "exemplar_holdout"


# Short names accepted on the command line
SPLIT_ALIASES = {"iid": SplitKind.IID, "subsample": SplitKind.SUBSAMPLE_IID, "exemplar": SplitKind.EXEMPLAR_HOLDOUT}


@dataclass(frozen=True)
class SplitSpec:
    """Declarative train/test partition.

    Attributes:
        kind (SplitKind): Partition protocol.
        train_fraction (float): Share of (subsampled) frames used for training in iid splits.
        subsample_factor (int): Keep every k-th frame before an iid split.
        holdout_exemplars_per_class (int | float): Held-out exemplars per class; values below 1 are fractions.
        stratified (bool): Partition each class separately in iid splits.
        seed (int): Seed of the random choices.
    """

    kind: SplitKind = SplitKind.IID
    train_fraction: float = 0.5
    subsample_factor: int = 10
    holdout_exemplars_per_class: Union[int, float] = 0.1
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", SPLIT_ALIASES.get(self.kind, self.kind))
        object.__setattr__(self, "kind", SplitKind(self.kind))
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(f"train_fraction must lie in (0, 1), got {self.train_fraction}.")
        if self.subsample_factor < 1:
            raise ConfigError(f"subsample_factor must be at least 1, got {self.subsample_factor}.")
        if self.holdout_exemplars_per_class <= 0:
            raise ConfigError("holdout_exemplars_per_class must be positive.")

    @property
    def name(self) -> str:
        if self.kind is SplitKind.SUBSAMPLE_IID:
            return f"subsample{self.subsample_factor}"
        return str(self.kind)

    def n_holdout(self, n_exemplars: int) -> int:
        if self.holdout_exemplars_per_class >= 1:
            return int(self.holdout_exemplars_per_class)
        return max(1, int(np.floor(self.holdout_exemplars_per_class * n_exemplars + 0.5)))


def _n_train(n: int, fraction: float) -> int:
    return int(np.floor(n * fraction + 0.5))


def _iid(rows: np.ndarray, labels: np.ndarray, spec: SplitSpec, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    if not spec.stratified:
        permuted = rng.permutation(rows)
        n_train = _n_train(len(rows), spec.train_fraction)
        return permuted[:n_train], permuted[n_train:]
    train, test = [], []
    for label in np.unique(labels[rows]):
        permuted = rng.permutation(rows[labels[rows] == label])
        n_train = _n_train(len(permuted), spec.train_fraction)
        train.append(permuted[:n_train])
        test.append(permuted[n_train:])
    if not train:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    return np.concatenate(train), np.concatenate(test)


def subsample_rows(frame_ids: np.ndarray, factor: int) -> np.ndarray:
    """Rows of every `factor`-th frame in frame order, starting with the earliest."""
    return np.argsort(frame_ids, kind="stable")[::factor]


def _exemplar_holdout(dataset: EmbeddingSet, spec: SplitSpec, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    if dataset.exemplar_ids is None:
        raise SplitError(f"Exemplar holdout needs exemplar ids, embedding set '{dataset.source}' has none.")
    exemplar_ids = dataset.exemplar_ids.astype(str)
    held_out = set()
    for label in np.unique(dataset.labels):
        exemplars = np.unique(exemplar_ids[dataset.labels == label])
        n_holdout = spec.n_holdout(len(exemplars))
        if len(exemplars) < n_holdout:
            raise SplitError(
                f"Class '{dataset.class_name(int(label))}' has {len(exemplars)} exemplars, "
                f"fewer than the {n_holdout} to hold out."
            )
        held_out.update((int(label), exemplar) for exemplar in rng.choice(exemplars, size=n_holdout, replace=False))
    is_test = np.array([(int(label), exemplar) in held_out for label, exemplar in zip(dataset.labels, exemplar_ids)],
                       dtype=bool)
    rows = np.arange(len(dataset))
    return rows[~is_test], rows[is_test]


def split(dataset: EmbeddingSet, spec: SplitSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Partitions the rows of an embedding set into train and test rows.

    iid draws a (stratified) random partition at `train_fraction`; subsample_iid first keeps
    every `subsample_factor`-th frame in frame order; exemplar_holdout holds out whole
    exemplars per class, so no frame of a held-out exemplar is in the train rows.

    Args:
        dataset (EmbeddingSet): Rows to partition.
        spec (SplitSpec): Partition protocol.

    Returns:
        Tuple[np.ndarray, np.ndarray]: Sorted train rows and sorted test rows.

    Raises:
        SplitError: If exemplar ids are missing or a class has too few exemplars.
    """
    rng = np.random.default_rng(spec.seed)
    if spec.kind is SplitKind.EXEMPLAR_HOLDOUT:
        train, test = _exemplar_holdout(dataset, spec, rng)
    else:
        rows = np.arange(len(dataset))
        if spec.kind is SplitKind.SUBSAMPLE_IID:
            rows = subsample_rows(dataset.frame_ids, spec.subsample_factor)
        train, test = _iid(rows, dataset.labels, spec, rng)
    logger.info(f"Split '{spec.name}': {len(train)} train / {len(test)} test rows.")
    return np.sort(train), np.sort(test)
