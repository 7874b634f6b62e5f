import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import cv2
import numpy as np
import polars as pl

from headcam.errors import ContractError, ParameterError
from headcam.probing import BackboneExtractor

logger = logging.getLogger(__name__)


@dataclass
class FeatureResponseTable:
    """Spatially averaged activations of one layer's features, one row per image.

    Attributes:
        responses (np.ndarray): N×F matrix.
        labels (np.ndarray): N category ids.
        layer_id (str): Layer the responses were tapped from.
        image_ids (np.ndarray | None): N image ids; row positions when omitted.
    """

    responses: np.ndarray
    labels: np.ndarray
    layer_id: str = ""
    image_ids: Optional[np.ndarray] = None

    def __post_init__(self):
        self.responses = np.asarray(self.responses, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.image_ids is None:
            self.image_ids = np.arange(len(self.responses))
        self.image_ids = np.asarray(self.image_ids)
        n_rows = len(self.responses)
        if self.responses.ndim != 2 or len(self.labels) != n_rows or len(self.image_ids) != n_rows:
            raise ContractError(f"Response table '{self.layer_id}' has inconsistent shapes.")
        if not np.all(np.isfinite(self.responses)):
            raise ContractError(f"Response table '{self.layer_id}' contains NaN or infinite values.")

    @property
    def n_features(self) -> int:
        return self.responses.shape[1]


def feature_response_table(
    extractor: BackboneExtractor, frames: np.ndarray, labels: np.ndarray, layer: str,
    image_ids: Optional[np.ndarray] = None,
) -> FeatureResponseTable:
    """Taps a backbone layer and averages each feature map over its spatial grid."""
    return FeatureResponseTable(
        responses=extractor.layer_responses(frames, layer), labels=labels, layer_id=layer, image_ids=image_ids
    )


def _class_means(responses: np.ndarray, labels: np.ndarray, classes: np.ndarray) -> np.ndarray:
    return np.stack([responses[labels == label].mean(axis=0) for label in classes])


def _selectivity(responses: np.ndarray, labels: np.ndarray, classes: np.ndarray, preferred: np.ndarray) -> np.ndarray:
    """CSI per feature given each feature's preferred class."""
    n_features = responses.shape[1]
    mu_max, mu_rest = np.zeros(n_features), np.zeros(n_features)
    for index, label in enumerate(classes):
        features = np.flatnonzero(preferred == index)
        if features.size == 0:
            continue
        in_class = labels == label
        mu_max[features] = responses[in_class][:, features].mean(axis=0)
        mu_rest[features] = responses[~in_class][:, features].mean(axis=0)
    denominator = mu_max + mu_rest
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(denominator > 0, (mu_max - mu_rest) / np.where(denominator > 0, denominator, 1.0), 0.0)


def csi(table: FeatureResponseTable, split_half: bool = False, seed: int = 0) -> np.ndarray:
    """Class selectivity index of every feature.

    CSI = (μ_max − μ_rest) / (μ_max + μ_rest), with μ_max the mean response over the images
    of the feature's most activating class and μ_rest the mean over all other images; 0 when
    both are zero. With `split_half` the preferred class is chosen on one random half of
    each class's images and the index computed on the other half.

    Args:
        table (FeatureResponseTable): Non-negative responses.
        split_half (bool): Decouple class selection from measurement.
        seed (int): Seed of the half split.

    Returns:
        np.ndarray: F selectivity indices in [0, 1].

    Raises:
        ContractError: If fewer than two classes are present or responses are negative.
    """
    classes = np.unique(table.labels)
    if len(classes) < 2:
        raise ContractError(f"CSI of layer '{table.layer_id}' needs at least 2 classes, got {len(classes)}.")
    if np.any(table.responses < 0):
        raise ContractError(f"CSI of layer '{table.layer_id}' needs non-negative responses.")
    responses, labels = table.responses, table.labels
    if not split_half:
        preferred = np.argmax(_class_means(responses, labels, classes), axis=0)
        return _selectivity(responses, labels, classes, preferred)
    rng = np.random.default_rng(seed)
    half_a, half_b = [], []
    for label in classes:
        rows = rng.permutation(np.flatnonzero(labels == label))
        if len(rows) < 2:
            raise ContractError(f"Split-half CSI needs 2 images of class {label}, got {len(rows)}.")
        half_a.append(rows[: len(rows) // 2])
        half_b.append(rows[len(rows) // 2 :])
    rows_a, rows_b = np.concatenate(half_a), np.concatenate(half_b)
    preferred = np.argmax(_class_means(responses[rows_a], labels[rows_a], classes), axis=0)
    return _selectivity(responses[rows_b], labels[rows_b], classes, preferred)


def csi_table(tables: List[FeatureResponseTable], split_half: bool = False, seed: int = 0) -> pl.DataFrame:
    """CSI of every feature of every table as rows (layer, feature, csi)."""
    frames = [
        pl.DataFrame({"layer": table.layer_id, "feature": np.arange(table.n_features),
                      "csi": csi(table, split_half=split_half, seed=seed)})
        for table in tables
    ]
    return pl.concat(frames) if frames else pl.DataFrame(schema={"layer": pl.Utf8, "feature": pl.Int64,
                                                                  "csi": pl.Float64})


def top_activating_images(
    table: FeatureResponseTable, feature_id: int, sample_size: int = 1024, top_k: int = 10, seed: int = 0
) -> np.ndarray:
    """Image ids of the most activating images of a feature within a seeded random sample.

    Args:
        table (FeatureResponseTable): Responses to rank.
        feature_id (int): Feature column.
        sample_size (int): Images drawn uniformly without replacement.
        top_k (int): Images returned.
        seed (int): Seed of the sample.

    Returns:
        np.ndarray: Up to `top_k` image ids by descending response; ties keep sample order.

    Raises:
        ParameterError: If the sample is larger than the table or the feature does not exist.
    """
    if sample_size > len(table.responses):
        raise ParameterError(f"Sample of {sample_size} images exceeds the {len(table.responses)} available.")
    if not 0 <= feature_id < table.n_features:
        raise ParameterError(f"Layer '{table.layer_id}' has no feature {feature_id}.")
    rows = np.random.default_rng(seed).choice(len(table.responses), size=sample_size, replace=False)
    order = np.argsort(-table.responses[rows, feature_id], kind="stable")
    return table.image_ids[rows[order[:top_k]]]


def export_top_images(
    table: FeatureResponseTable, frames: np.ndarray, dir_output: Path, n_features: int = 10,
    sample_size: int = 1024, top_k: int = 10, seed: int = 0,
) -> pl.DataFrame:
    """Writes PNG strips of the top images of the most selective features.

    `frames` is indexed by image id. Returns the index of written strips (layer, feature, csi, path).
    """
    dir_output.mkdir(parents=True, exist_ok=True)
    selectivity = csi(table)
    sample_size = min(sample_size, len(table.responses))
    rows = []
    for feature in np.argsort(-selectivity, kind="stable")[:n_features]:
        image_ids = top_activating_images(table, int(feature), sample_size=sample_size, top_k=top_k, seed=seed)
        strip = np.concatenate([frames[image_id] for image_id in image_ids], axis=1)
        path_strip = dir_output / f"{table.layer_id}_feature{int(feature):04d}.png"
        cv2.imwrite(str(path_strip), cv2.cvtColor(strip, cv2.COLOR_RGB2BGR))
        rows.append({"layer": table.layer_id, "feature": int(feature), "csi": float(selectivity[feature]),
                     "path": path_strip.name})
    logger.info(f"{len(rows)} top-image strips of layer '{table.layer_id}' written to '{dir_output}'.")
    return pl.DataFrame(rows)
