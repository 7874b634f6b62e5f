import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Optional

import polars as pl
import yaml

from .embeddings import EmbeddingSet
from .probe import ProbeConfig, fit_probe, majority_baseline, top1_accuracy
from .splits import SplitSpec, split

logger = logging.getLogger(__name__)


@dataclass
class ProbeResult:
    """Outcome of one linear probe evaluation."""

    model: str
    dataset: str
    split: str
    top1: float
    majority: float
    n_train: int
    n_test: int
    seed: int
    family: str = ""
    task: str = "all"


def evaluate_probe(
    dataset: EmbeddingSet,
    split_spec: SplitSpec,
    config: ProbeConfig = ProbeConfig(),
    dataset_name: str = "",
    task: str = "all",
) -> ProbeResult:
    """Splits an embedding set, fits a probe on the train rows and scores the test rows.

    The majority baseline is computed on the test labels.
    """
    rows_train, rows_test = split(dataset, split_spec)
    train, test = dataset.subset(rows_train), dataset.subset(rows_test)
    classifier = fit_probe(train, config)
    result = ProbeResult(
        model=dataset.source,
        dataset=dataset_name,
        split=split_spec.name,
        top1=top1_accuracy(classifier, test),
        majority=majority_baseline(test.labels),
        n_train=len(train),
        n_test=len(test),
        seed=split_spec.seed,
        family=str(classifier.family),
        task=task,
    )
    logger.info(
        f"Probe '{result.model}' on '{result.dataset}' ({result.split}, {task}): top-1 {result.top1:.4f}, "
        f"majority {result.majority:.4f}."
    )
    return result


def write_results(results: List[ProbeResult], path_file: Path) -> None:
    """Writes probe results as a YAML document with one entry per evaluation."""
    path_file.parent.mkdir(parents=True, exist_ok=True)
    with open(path_file, "w", encoding="utf-8") as file:
        yaml.safe_dump({"results": [asdict(result) for result in results]}, file, sort_keys=False)
    logger.info(f"{len(results)} probe results written to '{path_file}'.")


def read_results(path_file: Path) -> List[ProbeResult]:
    with open(path_file, encoding="utf-8") as file:
        document = yaml.safe_load(file) or {}
    return [ProbeResult(**entry) for entry in document.get("results", [])]


def results_table(results: List[ProbeResult], df_existing: Optional[pl.DataFrame] = None) -> pl.DataFrame:
    df = pl.DataFrame([asdict(result) for result in results])
    return df if df_existing is None else pl.concat([df_existing, df], how="diagonal_relaxed")
