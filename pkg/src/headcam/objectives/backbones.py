import logging
import os
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import torch
import torch.nn as nn
import torchvision

from headcam.errors import ConfigError, DataFileNotFoundError

logger = logging.getLogger(__name__)


def cache_dir() -> Path:
    """Directory for optional backbone weight files, overridable with HEADCAM_CACHE_DIR."""
    return Path(os.environ.get("HEADCAM_CACHE_DIR", Path.home() / ".cache" / "headcam"))


def resolve_weights(path_weights: Path) -> Path:
    """Returns the weights path, looking relative names up in `cache_dir()` when not found as given."""
    path_weights = Path(path_weights)
    if path_weights.is_absolute() or path_weights.exists():
        return path_weights
    return cache_dir() / path_weights


class Backbone(nn.Module):
    """Image encoder producing an embedding and the spatial feature stack it is pooled from.

    Subclasses implement `forward_taps`, returning the named intermediate activations in
    network order; the last one is the final spatial layer. The embedding is the global
    spatial average of that layer, so a linear readout on the embedding decomposes over
    spatial positions.
    """

    architecture_id: str = ""
    embedding_dim: int = 0

    @property
    def layer_names(self) -> List[str]:
        raise NotImplementedError

    def forward_taps(self, images: torch.Tensor) -> Dict[str, torch.Tensor]:
        raise NotImplementedError

    def spatial_features(self, images: torch.Tensor) -> torch.Tensor:
        return self.forward_taps(images)[self.layer_names[-1]]

    def embed(self, images: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """Returns (embeddings N×D, spatial features N×D×h×w)."""
        spatial = self.spatial_features(images)
        return spatial.mean(dim=(2, 3)), spatial

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        return self.embed(images)[0]


def _conv_block(c_in: int, c_out: int, stride: int) -> nn.Sequential:
    # GroupNorm keeps every sample independent of the rest of its batch
    return nn.Sequential(
        nn.Conv2d(c_in, c_out, kernel_size=3, stride=stride, padding=1, bias=False),
        nn.GroupNorm(num_groups=8, num_channels=c_out),
        nn.ReLU(inplace=False),
    )


class ReferenceCNN(Backbone):
    """Small strided CNN for desk-scale runs: 32×32 input gives a 128×4×4 final spatial layer."""

    architecture_id = "reference_cnn"

    def __init__(self, embedding_dim: int = 128, width: int = 32):
        super().__init__()
        self.embedding_dim = embedding_dim
        self.blocks = nn.ModuleDict(
            {
                "stem": _conv_block(3, width, stride=1),
                "block1": nn.Sequential(_conv_block(width, width * 2, stride=2), _conv_block(width * 2, width * 2, 1)),
                "block2": nn.Sequential(_conv_block(width * 2, width * 4, stride=2), _conv_block(width * 4, width * 4, 1)),
                "block3": nn.Sequential(_conv_block(width * 4, embedding_dim, stride=2),
                                        _conv_block(embedding_dim, embedding_dim, 1)),
            }
        )

    @property
    def layer_names(self) -> List[str]:
        return list(self.blocks.keys())

    def forward_taps(self, images: torch.Tensor) -> Dict[str, torch.Tensor]:
        taps = {}
        x = images
        for name, block in self.blocks.items():
            x = block(x)
            taps[name] = x
        return taps


class MobileNetV2Backbone(Backbone):
    """MobileNetV2 trunk: 224×224 input gives a 1280×7×7 final spatial layer (`features.18`)."""

    architecture_id = "mobilenet_v2"

    def __init__(self, embedding_dim: int = 1280, path_weights: Optional[Path] = None):
        super().__init__()
        if embedding_dim != 1280:
            raise ConfigError(f"mobilenet_v2 has a fixed embedding size of 1280, got {embedding_dim}.")
        self.embedding_dim = embedding_dim
        self.features = torchvision.models.mobilenet_v2(weights=None).features
        if path_weights is not None:
            self.load_weights(path_weights)

    def load_weights(self, path_weights: Path) -> None:
        """Loads an externally supplied state dict for the `features` trunk.

        Relative paths that do not exist in the working directory are taken from `cache_dir()`.

        Raises:
            DataFileNotFoundError: If the file does not exist.
        """
        path_weights = resolve_weights(path_weights)
        if not path_weights.exists():
            raise DataFileNotFoundError(f"No weights file '{path_weights}' found.")
        state = torch.load(path_weights, map_location="cpu", weights_only=True)
        state = {k.removeprefix("features."): v for k, v in state.items() if not k.startswith("classifier")}
        self.features.load_state_dict(state)
        logger.info(f"Backbone weights '{path_weights}' loaded.")

    @property
    def layer_names(self) -> List[str]:
        return [f"features.{i}" for i in range(len(self.features))]

    def forward_taps(self, images: torch.Tensor) -> Dict[str, torch.Tensor]:
        taps = {}
        x = images
        for i, layer in enumerate(self.features):
            x = layer(x)
            taps[f"features.{i}"] = x
        return taps


BACKBONES = {
    ReferenceCNN.architecture_id: ReferenceCNN,
    MobileNetV2Backbone.architecture_id: MobileNetV2Backbone,
}


def build_backbone(architecture_id: str, embedding_dim: Optional[int] = None, seed: Optional[int] = None,
                   **kwargs) -> Backbone:
    """Instantiates a registered backbone with its standard initialization.

    Args:
        architecture_id (str): Key in `BACKBONES`.
        embedding_dim (int | None): Embedding size for architectures that allow choosing it.
        seed (int | None): When given, initialization is deterministic for this seed.

    Returns:
        Backbone: The freshly initialized backbone.

    Raises:
        ConfigError: If the architecture is unknown.
    """
    if architecture_id not in BACKBONES:
        raise ConfigError(f"Unknown backbone architecture '{architecture_id}', choose from {sorted(BACKBONES)}.")
    if embedding_dim is not None:
        kwargs["embedding_dim"] = embedding_dim
    if seed is None:
        return BACKBONES[architecture_id](**kwargs)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return BACKBONES[architecture_id](**kwargs)
