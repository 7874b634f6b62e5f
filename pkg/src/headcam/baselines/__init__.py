from .hog import HogConfig, HogExtractor, hog_features
from .random_net import random_backbone
