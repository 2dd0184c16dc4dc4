"""Multi-scale pair discriminator with a three-class head.

The network consumes an image pair at several resolutions. At every scale
the two images are channel-concatenated (6 channels). The main branch
halves the spatial size per stage with stride-2 convolutions down to 4x4;
each lower-resolution pair is processed by a stride-1 convolution and
merged into the main branch at the stage of matching spatial size. The
head averages the final features over space and maps them to normalized
probabilities for the classes fake / genuine / imposter. No pooling
layers anywhere, and no normalization layers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigError, ShapeError
from .generator import seeded_init

FAKE, GENUINE, IMPOSTER = 0, 1, 2
_HEAD_SIZE = 4


@dataclass(frozen=True)
class DiscriminatorConfig:
    hr_size: int
    num_scales: int = 2
    base_channels: int = 64
    leaky_slope: float = 0.2
    channel_cap: int = 8  # max width multiplier over base_channels

    def __post_init__(self):
        if self.num_scales < 1:
            raise ConfigError(f"num_scales must be >= 1, got {self.num_scales}")
        stages = math.log2(self.hr_size / _HEAD_SIZE)
        if self.hr_size < 8 or stages != int(stages):
            raise ConfigError(
                f"hr_size must be a power of two >= 8, got {self.hr_size}"
            )
        if self.num_scales > int(stages):
            raise ConfigError(
                f"num_scales {self.num_scales} too large for hr_size {self.hr_size} "
                f"(at most {int(stages)})"
            )
        if not 0.0 < self.leaky_slope < 1.0:
            raise ConfigError(f"leaky_slope must be in (0, 1), got {self.leaky_slope}")

    @property
    def num_stages(self) -> int:
        return int(math.log2(self.hr_size / _HEAD_SIZE))

    @property
    def scale_sizes(self) -> list:
        """Input sizes, small to large; the last is hr_size."""
        return [self.hr_size // 2 ** (self.num_scales - 1 - j) for j in range(self.num_scales)]


@dataclass
class ClassProbs:
    """Batched class distribution over {fake, genuine, imposter}."""

    probs: torch.Tensor  # (n, 3), rows on the simplex

    def __post_init__(self):
        if self.probs.ndim != 2 or self.probs.shape[1] != 3:
            raise ShapeError(f"expected (n, 3) probabilities, got {tuple(self.probs.shape)}")

    @property
    def fake(self) -> torch.Tensor:
        return self.probs[:, FAKE]

    @property
    def genuine(self) -> torch.Tensor:
        return self.probs[:, GENUINE]

    @property
    def imposter(self) -> torch.Tensor:
        return self.probs[:, IMPOSTER]

    def __len__(self) -> int:
        return self.probs.shape[0]


class Discriminator(nn.Module):
    def __init__(self, config: DiscriminatorConfig):
        super().__init__()
        self.config = config
        base = config.base_channels
        side_sizes = set(config.scale_sizes[:-1])

        stage_convs = []
        side_convs = nn.ModuleDict()
        in_ch = 6
        size = config.hr_size
        for i in range(config.num_stages):
            if size in side_sizes:
                side_convs[str(size)] = nn.Conv2d(6, base, 3, padding=1)
                in_ch += base
            out_ch = base * min(2**i, config.channel_cap)
            stage_convs.append(nn.Conv2d(in_ch, out_ch, 4, stride=2, padding=1))
            in_ch = out_ch
            size //= 2
        self.stage_convs = nn.ModuleList(stage_convs)
        self.side_convs = side_convs
        self.head = nn.Linear(in_ch, 3)

    def forward(self, scales: list) -> torch.Tensor:
        """Pair inputs (6 channels each), small to large, to (n, 3) probabilities."""
        expected = self.config.scale_sizes
        if len(scales) != len(expected):
            raise ShapeError(f"expected {len(expected)} scales, got {len(scales)}")
        by_size = {}
        for x, want in zip(scales, expected):
            if x.ndim != 4 or x.shape[1] != 6:
                raise ShapeError(f"each scale must be (N, 6, S, S), got {tuple(x.shape)}")
            if x.shape[-2] != want or x.shape[-1] != want:
                raise ShapeError(f"expected scale of size {want}, got {x.shape[-2]}x{x.shape[-1]}")
            by_size[want] = x

        slope = self.config.leaky_slope
        x = by_size[expected[-1]]
        size = self.config.hr_size
        feat = x
        for conv in self.stage_convs:
            key = str(size)
            if key in self.side_convs:
                side = F.leaky_relu(self.side_convs[key](by_size[size]), slope)
                feat = torch.cat([feat, side], dim=1)
            feat = F.leaky_relu(conv(feat), slope)
            size //= 2
        pooled = feat.mean(dim=(-2, -1))
        return F.softmax(self.head(pooled), dim=1)


def build_discriminator(config: DiscriminatorConfig, init_seed: int = 0) -> Discriminator:
    """Construct and deterministically initialize a discriminator."""
    return seeded_init(Discriminator(config), init_seed)


def _as_tensor(x) -> torch.Tensor:
    if isinstance(x, np.ndarray):
        return torch.from_numpy(np.ascontiguousarray(x, dtype=np.float32))
    return x


def discriminate(disc: Discriminator, left_scales: list, right_scales: list) -> ClassProbs:
    """Classify a multi-scale pair; the two sides are concatenated per scale.

    Differentiable with respect to both discriminator parameters and the
    input images (numpy inputs are converted to tensors first).
    """
    if len(left_scales) != len(right_scales):
        raise ShapeError(
            f"left/right scale counts differ: {len(left_scales)} vs {len(right_scales)}"
        )
    pairs = [
        torch.cat([_as_tensor(l), _as_tensor(r)], dim=1)
        for l, r in zip(left_scales, right_scales)
    ]
    return ClassProbs(disc(pairs))
