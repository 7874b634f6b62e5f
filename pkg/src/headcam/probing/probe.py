import logging
import warnings
from dataclasses import dataclass
from enum import StrEnum
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import SGDClassifier

from headcam.errors import ConfigError, EmptyInputError, FitError, ParameterError

from .embeddings import EmbeddingSet

logger = logging.getLogger(__name__)


class ProbeFamily(StrEnum):
    MULTINOMIAL_LOGISTIC = "multinomial_logistic"
    LINEAR_HINGE = "linear_hinge"


# Short names accepted on the command line
FAMILY_ALIASES = {"logistic": ProbeFamily.MULTINOMIAL_LOGISTIC, "hinge": ProbeFamily.LINEAR_HINGE}


@dataclass(frozen=True)
class ProbeConfig:
    """Linear readout settings.

    Attributes:
        family (ProbeFamily | None): Probe family; None picks hinge for HOG features and logistic otherwise.
        lr (float): Adam learning rate of the logistic probe.
        epochs (int): Passes over the train rows for the logistic probe.
        batch_size (int): Rows per logistic probe step.
        alpha (float): L2 regularization of the hinge probe.
        max_iter (int): Hinge probe iterations.
        standardize (bool): z-score features with train statistics before the logistic fit.
        seed (int): Seed of initialization and shuffling.
    """

    family: Optional[ProbeFamily] = None
    lr: float = 0.0005
    epochs: int = 20
    batch_size: int = 1024
    alpha: float = 0.0001
    max_iter: int = 250
    standardize: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.family is not None:
            object.__setattr__(self, "family", ProbeFamily(FAMILY_ALIASES.get(self.family, self.family)))
        if min(self.lr, self.alpha) <= 0 or min(self.epochs, self.batch_size, self.max_iter) < 1:
            raise ConfigError("Probe hyperparameters must be positive.")

    def resolve_family(self, source: str) -> ProbeFamily:
        if self.family is not None:
            return self.family
        return ProbeFamily.LINEAR_HINGE if source.startswith("hog") else ProbeFamily.MULTINOMIAL_LOGISTIC


@dataclass
class LinearClassifier:
    """Linear map from D-dimensional features to scores over `classes`.

    Attributes:
        weights (np.ndarray): D×C matrix.
        bias (np.ndarray): C-vector.
        classes (np.ndarray): Label id of each score column, ascending.
        family (ProbeFamily): Family the map was fitted with.
    """

    weights: np.ndarray
    bias: np.ndarray
    classes: np.ndarray
    family: ProbeFamily = ProbeFamily.MULTINOMIAL_LOGISTIC

    def decision_function(self, embeddings: np.ndarray) -> np.ndarray:
        return embeddings @ self.weights + self.bias

    def predict(self, embeddings: np.ndarray) -> np.ndarray:
        # argmax keeps the lowest column on ties
        return self.classes[np.argmax(self.decision_function(embeddings), axis=1)]

    def class_weights(self, label: int) -> np.ndarray:
        """D-vector of weights scoring one class.

        Raises:
            ParameterError: If the classifier has no column for the label.
        """
        columns = np.flatnonzero(self.classes == label)
        if columns.size == 0:
            raise ParameterError(f"Classifier has no class {label}.")
        return self.weights[:, columns[0]]


def _fit_logistic(x: np.ndarray, y: np.ndarray, n_classes: int, config: ProbeConfig):
    mean = x.mean(axis=0) if config.standardize else np.zeros(x.shape[1])
    scale = x.std(axis=0) if config.standardize else np.ones(x.shape[1])
    scale = np.where(scale > 0, scale, 1.0)
    generator = torch.Generator().manual_seed(config.seed)
    inputs = torch.from_numpy((x - mean) / scale).float()
    targets = torch.from_numpy(y)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        linear = torch.nn.Linear(x.shape[1], n_classes)
    optimizer = torch.optim.Adam(linear.parameters(), lr=config.lr)
    for _ in range(config.epochs):
        order = torch.randperm(len(inputs), generator=generator)
        for start in range(0, len(inputs), config.batch_size):
            batch = order[start : start + config.batch_size]
            loss = F.cross_entropy(linear(inputs[batch]), targets[batch])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
    weights = linear.weight.detach().double().numpy().T
    bias = linear.bias.detach().double().numpy()
    # Fold the standardization into the linear map
    weights = weights / scale[:, None]
    bias = bias - mean @ weights
    return weights, bias


def _fit_hinge(x: np.ndarray, y: np.ndarray, config: ProbeConfig):
    classifier = SGDClassifier(loss="hinge", penalty="l2", alpha=config.alpha, max_iter=config.max_iter,
                               random_state=config.seed)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        classifier.fit(x, y)
    if any(issubclass(w.category, ConvergenceWarning) for w in caught):
        logger.warning(f"Hinge probe did not converge within {config.max_iter} iterations.")
    coef, intercept = classifier.coef_, classifier.intercept_
    if coef.shape[0] == 1:
        # Binary problems have one score; column 0 is the zero reference
        coef = np.vstack([np.zeros_like(coef), coef])
        intercept = np.r_[0.0, intercept]
    return coef.T, intercept


def fit_probe(train: EmbeddingSet, config: ProbeConfig = ProbeConfig()) -> LinearClassifier:
    """Fits a linear readout on frozen embeddings.

    Args:
        train (EmbeddingSet): Training rows.
        config (ProbeConfig): Probe family and hyperparameters.

    Returns:
        LinearClassifier: The fitted D→C map.

    Raises:
        FitError: If the train rows contain fewer than two classes.
    """
    classes = np.unique(train.labels)
    if len(classes) < 2:
        raise FitError(f"Probe on '{train.source}' needs at least 2 classes, train set has {len(classes)}.")
    family = config.resolve_family(train.source)
    y = np.searchsorted(classes, train.labels)
    if family is ProbeFamily.LINEAR_HINGE:
        weights, bias = _fit_hinge(train.embeddings, y, config)
    else:
        weights, bias = _fit_logistic(train.embeddings, y, len(classes), config)
    logger.info(f"{family} probe fitted on {len(train)} rows, {train.dim} features, {len(classes)} classes.")
    return LinearClassifier(weights=weights, bias=bias, classes=classes, family=family)


def top1_accuracy(classifier: LinearClassifier, test: EmbeddingSet) -> float:
    """Fraction of test rows whose highest-scoring class is their label.

    Raises:
        EmptyInputError: If the test set is empty.
    """
    if len(test) == 0:
        raise EmptyInputError(f"Cannot score an empty test set of '{test.source}'.")
    return float(np.mean(classifier.predict(test.embeddings) == test.labels))


def majority_baseline(labels: np.ndarray) -> float:
    """Accuracy of always predicting the most frequent label.

    Raises:
        EmptyInputError: If there are no labels.
    """
    labels = np.asarray(labels)
    if labels.size == 0:
        raise EmptyInputError("Majority baseline of an empty label set is undefined.")
    _, counts = np.unique(labels, return_counts=True)
    return float(counts.max() / labels.size)


def binary_task(dataset: EmbeddingSet, class_a: str | int, class_b: str | int) -> EmbeddingSet:
    """Restricts an embedding set to two classes, relabeled 0 (class_a) and 1 (class_b).

    Raises:
        ParameterError: If both classes are the same.
        EmptyInputError: If a class has no rows.
    """
    if class_a == class_b:
        raise ParameterError(f"Binary task needs two different classes, got '{class_a}' twice.")
    ids = []
    for name in (class_a, class_b):
        if isinstance(name, str):
            label = dataset.vocabulary.index(name) if name in dataset.vocabulary else -1
        else:
            label = int(name)
        if label < 0 or not np.any(dataset.labels == label):
            raise EmptyInputError(f"Class '{name}' has no frames in '{dataset.source}'.")
        ids.append(label)
    rows = np.flatnonzero(np.isin(dataset.labels, ids))
    subset = dataset.subset(rows)
    subset.labels = (subset.labels == ids[1]).astype(np.int64)
    subset.vocabulary = [dataset.class_name(ids[0]), dataset.class_name(ids[1])]
    return subset
