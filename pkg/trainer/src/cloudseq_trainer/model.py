"""Sequence forecaster: shared per-frame encoder, LSTM feature rollout,
shared per-frame decoder.

Two encoder/decoder families are available: a per-point MLP with max-pooling
(order-invariant, variable cloud size) and a strided 2D CNN over range maps.
Both compress every frame to one 1024-d feature so the same LSTM serves both.
"""

from __future__ import annotations

import torch
from torch import nn

from .config import TrainerConfig

POINT_MLP_LOCAL = (3, 8, 16, 32, 64, 128)
POINT_MLP_FUSED = (256, 256, 512, 1024)

CONV_CHANNELS = (1, 4, 8, 16, 32, 64, 128, 256, 512)
# per-block (row, col) strides; rows pause while columns keep halving
CONV_STRIDES = ((2, 2), (1, 2), (1, 2), (2, 2), (2, 2), (2, 2), (2, 2), (2, 2))


def _conv_out(size: int, stride: int) -> int:
    # kernel 3, padding 1
    return (size + 2 - 3) // stride + 1


def conv_shape_chain(height: int, width: int):
    """Spatial sizes after each encoder block, input shape included."""
    shapes = [(height, width)]
    for sr, sc in CONV_STRIDES:
        h, w = shapes[-1]
        shapes.append((_conv_out(h, sr), _conv_out(w, sc)))
    return shapes


class PointEncoder(nn.Module):
    """Per-point MLP -> max-pool global feature -> fuse -> pooled scene feature."""

    def __init__(self):
        super().__init__()
        local = []
        for cin, cout in zip(POINT_MLP_LOCAL, POINT_MLP_LOCAL[1:]):
            local += [nn.Linear(cin, cout), nn.ReLU()]
        self.local_mlp = nn.Sequential(*local)
        fused = []
        for cin, cout in zip(POINT_MLP_FUSED, POINT_MLP_FUSED[1:]):
            fused += [nn.Linear(cin, cout), nn.ReLU()]
        self.fused_mlp = nn.Sequential(*fused)

    def forward(self, points: torch.Tensor) -> torch.Tensor:
        """(K, 3) -> (1024,); any K >= 1."""
        if points.ndim != 2 or points.shape[0] < 1:
            raise ValueError(f"expected a (K, 3) cloud with K >= 1, got {tuple(points.shape)}")
        local = self.local_mlp(points)                      # (K, 128)
        scene = local.max(dim=0).values                     # (128,)
        fused = torch.cat([local, scene.expand(local.shape[0], -1)], dim=1)
        per_point = self.fused_mlp(fused)                   # (K, 1024)
        return per_point.max(dim=0).values


class RangeMapEncoder(nn.Module):
    """Eight conv+BN+ReLU blocks, then one plain conv down to the feature."""

    def __init__(self, height: int, width: int, feature_dim: int = 1024,
                 range_scale: float = 1.0):
        super().__init__()
        blocks = []
        for (cin, cout), stride in zip(zip(CONV_CHANNELS, CONV_CHANNELS[1:]),
                                       CONV_STRIDES):
            blocks += [nn.Conv2d(cin, cout, kernel_size=3, stride=stride,
                                 padding=1),
                       nn.BatchNorm2d(cout),
                       nn.ReLU()]
        self.blocks = nn.Sequential(*blocks)
        final_h, final_w = conv_shape_chain(height, width)[-1]
        self.head = nn.Conv2d(CONV_CHANNELS[-1], feature_dim,
                              kernel_size=(final_h, final_w))
        self.input_shape = (height, width)
        self.range_scale = range_scale

    def forward(self, rangemaps: torch.Tensor) -> torch.Tensor:
        """(B, 1, H, W) -> (B, 1024)."""
        if rangemaps.shape[-2:] != self.input_shape:
            raise ValueError(f"expected maps of shape {self.input_shape}, "
                             f"got {tuple(rangemaps.shape[-2:])}")
        return self.head(self.blocks(rangemaps / self.range_scale)).flatten(1)


class FeatureRollout(nn.Module):
    """Consume past features, then free-run the LSTM on its own predictions."""

    def __init__(self, feature_dim: int = 1024, layers: int = 2,
                 hidden: int = 1024):
        super().__init__()
        if hidden != feature_dim:
            raise ValueError("hidden size must equal the feature size so "
                             "predictions can be fed back")
        self.lstm = nn.LSTM(feature_dim, hidden, layers, batch_first=True)

    def forward(self, features: torch.Tensor, horizon: int) -> torch.Tensor:
        """(B, M, D) past features -> (B, N, D) predicted features."""
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        out, state = self.lstm(features)
        pred = out[:, -1:]
        preds = [pred]
        for _ in range(horizon - 1):
            pred, state = self.lstm(pred, state)
            preds.append(pred)
        return torch.cat(preds, dim=1)


class PointDecoder(nn.Module):
    """Feature -> fixed-size cloud via an MLP reshaped to (K, 3)."""

    def __init__(self, num_points: int, feature_dim: int = 1024):
        super().__init__()
        self.num_points = num_points
        self.mlp = nn.Sequential(
            nn.Linear(feature_dim, feature_dim),
            nn.ReLU(),
            nn.Linear(feature_dim, num_points * 3),
        )

    def forward(self, feature: torch.Tensor) -> torch.Tensor:
        """(B, D) -> (B, K, 3)."""
        return self.mlp(feature).view(-1, self.num_points, 3)


class RangeMapDecoder(nn.Module):
    """Mirror of the encoder: deconv blocks back to (H, W) ranges, plus a
    parallel deconv stack producing occupancy-mask logits."""

    def __init__(self, height: int, width: int, feature_dim: int = 1024,
                 range_scale: float = 1.0):
        super().__init__()
        self.output_shape = (height, width)
        shapes = conv_shape_chain(height, width)
        self.seed_shape = shapes[-1]
        self.unhead = nn.ConvTranspose2d(feature_dim, CONV_CHANNELS[-1],
                                         kernel_size=self.seed_shape)
        self.range_blocks = self._mirror_blocks(shapes, final_channels=1)
        self.mask_blocks = self._mirror_blocks(shapes, final_channels=1)
        self.range_scale = range_scale

    @staticmethod
    def _mirror_blocks(shapes, final_channels: int) -> nn.Sequential:
        blocks = []
        steps = list(zip(CONV_CHANNELS, CONV_CHANNELS[1:], CONV_STRIDES,
                         shapes, shapes[1:]))
        for cin, cout, stride, target, source in reversed(steps):
            # output_padding recovers sizes that the strided floor collapsed
            out_pad = tuple(
                t - ((s - 1) * st - 2 + 3)
                for t, s, st in zip(target, source, stride))
            last = cin == CONV_CHANNELS[0]
            blocks.append(nn.ConvTranspose2d(
                cout, final_channels if last else cin, kernel_size=3,
                stride=stride, padding=1, output_padding=out_pad))
            if not last:
                blocks += [nn.BatchNorm2d(cin), nn.ReLU()]
        return nn.Sequential(*blocks)

    def forward(self, feature: torch.Tensor):
        """(B, D) -> ranges (B, H, W), mask logits (B, H, W)."""
        seed = self.unhead(feature[:, :, None, None])
        ranges = self.range_blocks(seed).squeeze(1) * self.range_scale
        logits = self.mask_blocks(seed).squeeze(1)
        return ranges, logits


class SequenceForecaster(nn.Module):
    """Full model: encode M past frames, roll the LSTM N steps, decode."""

    def __init__(self, config: TrainerConfig):
        super().__init__()
        self.config = config
        if config.encoder == "point":
            self.encoder = PointEncoder()
            self.decoder = PointDecoder(config.decoder_points,
                                        config.feature_dim)
        else:
            self.encoder = RangeMapEncoder(config.grid_height,
                                           config.grid_width,
                                           config.feature_dim,
                                           config.range_scale)
            self.decoder = RangeMapDecoder(config.grid_height,
                                           config.grid_width,
                                           config.feature_dim,
                                           config.range_scale)
        self.rollout = FeatureRollout(config.feature_dim, config.lstm_layers,
                                      config.lstm_hidden)

    def encode_clouds(self, clouds) -> torch.Tensor:
        """List of (K_i, 3) tensors -> (1, M, D)."""
        return torch.stack([self.encoder(c) for c in clouds]).unsqueeze(0)

    def encode_rangemaps(self, maps: torch.Tensor) -> torch.Tensor:
        """(B, M, H, W) -> (B, M, D)."""
        batch, past = maps.shape[:2]
        flat = maps.reshape(batch * past, 1, *maps.shape[2:])
        return self.encoder(flat).reshape(batch, past, -1)

    def forecast_features(self, features: torch.Tensor,
                          horizon: int) -> torch.Tensor:
        return self.rollout(features, horizon)
