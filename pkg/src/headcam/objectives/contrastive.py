import copy
from dataclasses import dataclass
from typing import Iterable, List

import torch
import torch.nn as nn
import torch.nn.functional as F

from headcam.errors import ContractError

from .backbones import Backbone
from .losses import UNIT_NORM_TOLERANCE, info_nce_loss


@dataclass
class QueueState:
    """Ring buffer of K unit-norm negative keys and the row the next keys are written to."""

    queue: torch.Tensor
    ptr: int = 0

    def __post_init__(self):
        if not 0 <= self.ptr < self.queue.shape[0]:
            raise ContractError(f"Queue pointer {self.ptr} outside [0, {self.queue.shape[0]}).")

    @classmethod
    def random(cls, size: int, dim: int, generator: torch.Generator | None = None) -> "QueueState":
        return cls(queue=F.normalize(torch.randn(size, dim, generator=generator), dim=1), ptr=0)


@torch.no_grad()
def enqueue(state: QueueState, keys: torch.Tensor) -> QueueState:
    """Writes a batch of keys into rows [ptr, ptr + B) mod K and advances the pointer.

    The queue tensor is updated in place; the returned state shares it.

    Raises:
        ContractError: If B > K or the keys are not unit-norm.
    """
    size = state.queue.shape[0]
    batch = keys.shape[0]
    if batch > size:
        raise ContractError(f"Cannot enqueue {batch} keys into a queue of {size}.")
    norms = keys.norm(dim=1)
    if batch and (norms - 1.0).abs().max() > UNIT_NORM_TOLERANCE:
        raise ContractError("Enqueued keys must be unit-norm.")
    rows = (state.ptr + torch.arange(batch)) % size
    state.queue[rows] = keys.detach().to(state.queue.dtype)
    state.ptr = (state.ptr + batch) % size
    return state


@torch.no_grad()
def momentum_update(
    query_params: Iterable[torch.Tensor], key_params: Iterable[torch.Tensor], m: float
) -> List[torch.Tensor]:
    """Moves key parameters toward query parameters: θ_k ← m·θ_k + (1 − m)·θ_q.

    Key parameters are updated in place and returned; query parameters are untouched.

    Raises:
        ContractError: If the collections differ in length or shapes, or m is outside [0, 1].
    """
    if not 0.0 <= m <= 1.0:
        raise ContractError(f"Momentum must lie in [0, 1], got {m}.")
    query_params, key_params = list(query_params), list(key_params)
    if len(query_params) != len(key_params):
        raise ContractError(f"{len(query_params)} query parameters vs {len(key_params)} key parameters.")
    for param_q, param_k in zip(query_params, key_params):
        if param_q.shape != param_k.shape:
            raise ContractError(f"Parameter shapes {tuple(param_q.shape)} and {tuple(param_k.shape)} differ.")
    for param_q, param_k in zip(query_params, key_params):
        param_k.mul_(m).add_(param_q.detach(), alpha=1.0 - m)
    return key_params


class ProjectionHead(nn.Module):
    """Two-layer MLP mapping embeddings to the contrastive space."""

    def __init__(self, in_dim: int, hidden_dim: int, out_dim: int = 128):
        super().__init__()
        self.net = nn.Sequential(nn.Linear(in_dim, hidden_dim), nn.ReLU(), nn.Linear(hidden_dim, out_dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class Encoder(nn.Module):
    """Backbone followed by a projection head, returning unit-norm vectors."""

    def __init__(self, backbone: Backbone, projection: ProjectionHead):
        super().__init__()
        self.backbone = backbone
        self.projection = projection

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        return F.normalize(self.projection(self.backbone(images)), dim=1)


class MomentumContrast(nn.Module):
    """Query encoder, momentum key encoder and negative queue.

    Attributes:
        encoder_q (Encoder): Trained by gradient descent.
        encoder_k (Encoder): Momentum copy of `encoder_q`, never receives gradients.
        queue_state (QueueState): K×d negative keys.
        momentum (float): m in the key encoder update.
        temperature (float): τ in the contrastive loss.
    """

    def __init__(
        self,
        backbone: Backbone,
        queue_size: int = 65536,
        proj_dim: int = 128,
        hidden_dim: int | None = None,
        momentum: float = 0.999,
        temperature: float = 0.2,
        seed: int = 0,
    ):
        super().__init__()
        hidden_dim = hidden_dim or backbone.embedding_dim
        self.encoder_q = Encoder(backbone, ProjectionHead(backbone.embedding_dim, hidden_dim, proj_dim))
        self.encoder_k = copy.deepcopy(self.encoder_q)
        for param_k in self.encoder_k.parameters():
            param_k.requires_grad = False
        self.momentum = momentum
        self.temperature = temperature
        generator = torch.Generator().manual_seed(seed)
        self.queue_state = QueueState.random(queue_size, proj_dim, generator=generator)

    @property
    def backbone(self) -> Backbone:
        return self.encoder_q.backbone

    def forward(self, view_q: torch.Tensor, view_k: torch.Tensor) -> torch.Tensor:
        """Returns the contrastive loss for a batch of (query view, key view) pairs and enqueues the keys."""
        q = self.encoder_q(view_q)
        with torch.no_grad():
            momentum_update(self.encoder_q.parameters(), self.encoder_k.parameters(), self.momentum)
            k = self.encoder_k(view_k)
        loss = info_nce_loss(q, k, self.queue_state.queue.clone(), self.temperature)
        enqueue(self.queue_state, k)
        return loss

    def contrastive_state(self) -> dict:
        return {
            "encoder_k": self.encoder_k.state_dict(),
            "projection_q": self.encoder_q.projection.state_dict(),
            "queue": self.queue_state.queue.clone(),
            "queue_ptr": self.queue_state.ptr,
        }

    def load_contrastive_state(self, state: dict) -> None:
        self.encoder_k.load_state_dict(state["encoder_k"])
        self.encoder_q.projection.load_state_dict(state["projection_q"])
        self.queue_state = QueueState(queue=state["queue"].clone(), ptr=int(state["queue_ptr"]))
