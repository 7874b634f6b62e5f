from typing import Optional

import numpy as np
import torch
import torchvision.transforms.functional as TF
from torchvision import transforms

from .color import color_jitter, normalize, random_grayscale, to_tensor
from .config import AugmentConfig, ContrastiveAugmentConfig, NormalizationConstants


def stream_generator(seed: int, *keys: int) -> torch.Generator:
    """Returns a torch generator seeded from a global seed and a tuple of integer keys.

    Streams derived from (seed, epoch, frame_id, view_index) do not depend on which worker
    processes a frame, so parallel loading gives the same augmentations as serial loading.
    """
    state = np.random.SeedSequence([seed, *keys]).generate_state(2, dtype=np.uint32)
    return torch.Generator().manual_seed(int(state[0]) << 32 | int(state[1]))


class FramePipeline:
    """Turns an H×W×3 uint8 frame into a normalized tensor, optionally augmenting it.

    The photometric chain (jitter, then grayscale) follows the temporal-classification recipe.
    When a `ContrastiveAugmentConfig` is given, a random resized crop, Gaussian blur and
    horizontal flip run first, as in the momentum-contrast recipe.
    """

    def __init__(
        self,
        augment: AugmentConfig,
        constants: NormalizationConstants = NormalizationConstants(),
        contrastive: Optional[ContrastiveAugmentConfig] = None,
    ):
        self.augment = augment
        self.constants = constants
        self.contrastive = contrastive

    def __call__(self, frame: np.ndarray, generator: torch.Generator) -> torch.Tensor:
        image = to_tensor(frame)
        if self.augment.enabled:
            if self.contrastive is not None and self.contrastive.enabled:
                image = self._geometric(image, generator=generator)
            image = color_jitter(image, self.augment, generator)
            image = random_grayscale(image, self.augment.grayscale_prob, generator)
        return normalize(image, self.constants)

    def _geometric(self, image: torch.Tensor, generator: torch.Generator) -> torch.Tensor:
        config = self.contrastive
        _, height, width = image.shape
        top, left, crop_h, crop_w = self._crop_params(image, generator)
        image = TF.resized_crop(
            image, top, left, crop_h, crop_w, [height, width],
            interpolation=TF.InterpolationMode.BILINEAR, antialias=True,
        )
        if _draw(generator) < config.blur_prob:
            sigma = config.blur_sigma_min + (config.blur_sigma_max - config.blur_sigma_min) * _draw(generator)
            kernel = max(3, int(0.1 * min(height, width)) // 2 * 2 + 1)
            image = TF.gaussian_blur(image, kernel_size=[kernel, kernel], sigma=[sigma, sigma])
        if _draw(generator) < config.flip_prob:
            image = TF.hflip(image)
        return image

    def _crop_params(self, image: torch.Tensor, generator: torch.Generator):
        """Draws a crop covering a random area fraction with aspect ratio in [3/4, 4/3]."""
        config = self.contrastive
        seed = int(torch.randint(2**62, (1,), generator=generator).item())
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            return transforms.RandomResizedCrop.get_params(
                image, scale=[config.crop_scale_min, config.crop_scale_max], ratio=[3 / 4, 4 / 3]
            )


def _draw(generator: torch.Generator) -> float:
    return float(torch.rand(1, generator=generator).item())
