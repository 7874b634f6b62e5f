from typing import Tuple

import torch
import torch.nn.functional as F

from headcam.errors import ContractError, ShapeError

UNIT_NORM_TOLERANCE = 1e-4


def temporal_classification_loss(logits: torch.Tensor, class_ids: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """Mean cross-entropy of predicting each frame's temporal class, and the batch accuracy.

    Args:
        logits (torch.Tensor): N×C scores over temporal classes.
        class_ids (torch.Tensor): N temporal class ids in [0, C).

    Returns:
        Tuple[torch.Tensor, torch.Tensor]: Scalar loss and scalar accuracy.

    Raises:
        ShapeError: If logits are not N×C for the N class ids.
        ContractError: If a class id lies outside [0, C).
    """
    if logits.ndim != 2 or class_ids.ndim != 1 or logits.shape[0] != class_ids.shape[0]:
        raise ShapeError(f"Logits {tuple(logits.shape)} do not match class ids {tuple(class_ids.shape)}.")
    n_classes = logits.shape[1]
    if class_ids.numel() and (class_ids.min() < 0 or class_ids.max() >= n_classes):
        raise ContractError(f"Class ids must lie in [0, {n_classes}).")
    loss = F.cross_entropy(logits, class_ids)
    accuracy = (logits.argmax(dim=1) == class_ids).float().mean()
    return loss, accuracy


def _check_unit_norm(name: str, vectors: torch.Tensor) -> None:
    norms = vectors.detach().norm(dim=-1)
    if norms.numel() and (norms - 1.0).abs().max() > UNIT_NORM_TOLERANCE:
        raise ContractError(f"{name} vectors must be unit-norm (tolerance {UNIT_NORM_TOLERANCE}).")


def info_nce_loss(
    query: torch.Tensor, positive_key: torch.Tensor, queue: torch.Tensor, temperature: float
) -> torch.Tensor:
    """Contrastive loss of each query against its positive key and a queue of negatives.

    Computes the mean over the batch of -log(exp(q·k+/τ) / (exp(q·k+/τ) + Σ_j exp(q·k_j/τ))).

    Args:
        query (torch.Tensor): N×d unit-norm query vectors.
        positive_key (torch.Tensor): N×d unit-norm positive keys.
        queue (torch.Tensor): K×d unit-norm negative keys.
        temperature (float): Softmax temperature τ.

    Returns:
        torch.Tensor: Scalar loss.

    Raises:
        ShapeError: If the dimensions disagree.
        ContractError: If any vector is not unit-norm.
    """
    if query.shape != positive_key.shape or query.shape[-1] != queue.shape[-1]:
        raise ShapeError(
            f"Query {tuple(query.shape)}, key {tuple(positive_key.shape)} and queue {tuple(queue.shape)} disagree."
        )
    _check_unit_norm("Query", query)
    _check_unit_norm("Positive key", positive_key)
    _check_unit_norm("Queue", queue)
    l_pos = (query * positive_key).sum(dim=1, keepdim=True)
    l_neg = query @ queue.T
    logits = torch.cat([l_pos, l_neg], dim=1) / temperature
    labels = torch.zeros(logits.shape[0], dtype=torch.long, device=logits.device)
    return F.cross_entropy(logits, labels)
