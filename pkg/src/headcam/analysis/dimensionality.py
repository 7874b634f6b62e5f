import numpy as np
import polars as pl
from sklearn.decomposition import PCA

from headcam.errors import ParameterError, ZeroVarianceError

EXACT_SOLVER_MAX_DIM = 4096


def pca_curve(embeddings: np.ndarray, seed: int = 0) -> np.ndarray:
    """Cumulative fraction of variance explained by the leading principal components.

    Uses an exact decomposition up to 4096 dimensions and a randomized solver above.

    Args:
        embeddings (np.ndarray): N×D matrix.
        seed (int): Seed of the randomized solver.

    Returns:
        np.ndarray: Nondecreasing curve of length min(N − 1, D) ending at 1.

    Raises:
        ParameterError: If there are fewer than two rows.
        ZeroVarianceError: If all rows are identical.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    n_rows, dim = embeddings.shape
    if n_rows < 2:
        raise ParameterError(f"PCA needs at least 2 embeddings, got {n_rows}.")
    total = embeddings.var(axis=0, ddof=1).sum()
    if total <= 0:
        raise ZeroVarianceError("Embeddings have zero total variance.")
    n_components = min(n_rows - 1, dim)
    if dim <= EXACT_SOLVER_MAX_DIM:
        pca = PCA(svd_solver="full").fit(embeddings)
    else:
        pca = PCA(n_components=n_components, svd_solver="randomized", random_state=seed).fit(embeddings)
    curve = np.cumsum(pca.explained_variance_[:n_components]) / total
    return np.minimum(curve, 1.0)


def pca_table(curve: np.ndarray, source: str = "") -> pl.DataFrame:
    return pl.DataFrame(
        {"source": source, "n_components": np.arange(1, len(curve) + 1), "variance_explained": curve}
    )
