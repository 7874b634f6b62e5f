from .backbones import (
    BACKBONES,
    Backbone,
    MobileNetV2Backbone,
    ReferenceCNN,
    build_backbone,
    cache_dir,
    resolve_weights,
)
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .contrastive import MomentumContrast, ProjectionHead, QueueState, enqueue, momentum_update
from .losses import info_nce_loss, temporal_classification_loss
from .pairs import temporal_positive_pairs
from .trainer import Objective, TemporalClassifierHead, TrainConfig, Trainer, train
