"""Trainable LSTM encoder-decoder forecaster for point-cloud sequences."""

from .config import TrainerConfig
from .losses import chamfer, composite_frame_loss, mask_bce, masked_l1
from .model import (
    FeatureRollout,
    PointDecoder,
    PointEncoder,
    RangeMapDecoder,
    RangeMapEncoder,
    SequenceForecaster,
    conv_shape_chain,
)
from .train import collect_windows, emit_forecasts, train

__version__ = "0.1.0"
