from .attention import AttentionMap, cam, export_attention_maps, mask_image
from .dimensionality import pca_curve, pca_table
from .selectivity import (
    FeatureResponseTable,
    csi,
    csi_table,
    export_top_images,
    feature_response_table,
    top_activating_images,
)
from .sweeps import SweepConfig, run_sweep
