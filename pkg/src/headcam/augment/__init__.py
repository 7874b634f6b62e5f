from .config import AugmentConfig, ContrastiveAugmentConfig, NormalizationConstants
from .color import color_jitter, luminance, normalize, random_grayscale, to_tensor
from .pipeline import FramePipeline, stream_generator
