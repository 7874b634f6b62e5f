from .embeddings import BackboneExtractor, EmbeddingSet, extract_embeddings
from .image_folder import load_image_folder
from .probe import (
    LinearClassifier,
    ProbeConfig,
    ProbeFamily,
    binary_task,
    fit_probe,
    majority_baseline,
    top1_accuracy,
)
from .results import ProbeResult, evaluate_probe, read_results, results_table, write_results
from .splits import SplitKind, SplitSpec, split, subsample_rows
