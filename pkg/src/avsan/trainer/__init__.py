"""Toy two-stream encoders trained with contrastive, silence, noise and
equivariance losses."""

from .augment import (
    GeoTransform,
    alpha_schedule,
    apply_geo_transform,
    feature_masking,
    find_similar_audio,
    mask_features,
    sam_mix,
)
from .encoders import EncoderParams, Layout, audio_encoder, init_params, visual_encoder
from .losses import (
    Batch,
    LossBreakdown,
    backward,
    contrastive_loss,
    geo_equivariance_loss,
    noise_loss,
    objective,
    silence_embedding,
    silence_loss,
    total_loss,
)
from .loop import TrainConfig, layout_for, train
