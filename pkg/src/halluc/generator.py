"""Multi-branch residual generator.

The network maps an LR face to outputs at progressively doubling
resolutions: a stack of residual blocks at the input scale, then one
sub-pixel (pixel-shuffle) upsampling stage per doubling, each stage ending
in its own 3-channel tanh head. The deepest branch matches the HR target,
so a factor-8 generator fed 16x16 emits 32/64/128 images.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigError, ShapeError


@dataclass(frozen=True)
class GeneratorConfig:
    lr_size: int
    scale_factor: int = 4
    base_channels: int = 64
    residual_blocks_per_stage: int = 4  # trunk depth before the first upsample
    inter_stage_blocks: int = 2  # depth between consecutive upsamples

    def __post_init__(self):
        if self.scale_factor not in (4, 8):
            raise ConfigError(f"scale_factor must be 4 or 8, got {self.scale_factor}")
        if self.lr_size < 1:
            raise ConfigError(f"lr_size must be >= 1, got {self.lr_size}")
        if self.base_channels < 1:
            raise ConfigError(f"base_channels must be >= 1, got {self.base_channels}")
        if self.residual_blocks_per_stage < 0 or self.inter_stage_blocks < 0:
            raise ConfigError("block counts must be nonnegative")

    @property
    def num_stages(self) -> int:
        """Number of x2 upsampling stages (= number of output branches)."""
        return int(math.log2(self.scale_factor))

    @property
    def hr_size(self) -> int:
        return self.lr_size * self.scale_factor

    @property
    def branch_sizes(self) -> list:
        """Output spatial sizes, small to large; the last equals hr_size."""
        return [self.lr_size * 2 ** (k + 1) for k in range(self.num_stages)]


def pixel_shuffle(x: torch.Tensor, r: int) -> torch.Tensor:
    """Periodic channel-to-space rearrangement upscaling by ``r``.

    output[ch, h*r + dy, w*r + dx] = input[ch*r*r + dy*r + dx, h, w];
    a pure rearrangement, bijective on elements.
    """
    if r < 1:
        raise ShapeError(f"shuffle factor must be >= 1, got {r}")
    c = x.shape[-3]
    if c % (r * r):
        raise ShapeError(f"channel count {c} not divisible by r^2 = {r * r}")
    if r == 1:
        return x
    return F.pixel_shuffle(x, r)


def pixel_unshuffle(x: torch.Tensor, r: int) -> torch.Tensor:
    """Inverse rearrangement of :func:`pixel_shuffle`."""
    if r < 1:
        raise ShapeError(f"shuffle factor must be >= 1, got {r}")
    if x.shape[-2] % r or x.shape[-1] % r:
        raise ShapeError(f"spatial size {tuple(x.shape[-2:])} not divisible by {r}")
    if r == 1:
        return x
    return F.pixel_unshuffle(x, r)


class ResidualBlock(nn.Module):
    """conv-BN-PReLU-conv-BN with an identity skip; spatial size preserved."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.bn1 = nn.BatchNorm2d(channels, momentum=0.1)
        self.act = nn.PReLU(init=0.25)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.bn2 = nn.BatchNorm2d(channels, momentum=0.1)

    def forward(self, x):
        if x.shape[-3] != self.conv1.in_channels:
            raise ShapeError(
                f"residual block expects {self.conv1.in_channels} channels, got {x.shape[-3]}"
            )
        out = self.bn1(self.conv1(x))
        out = self.act(out)
        out = self.bn2(self.conv2(out))
        return x + out


class UpsampleStage(nn.Module):
    """3x3 conv to 4x channels, pixel shuffle by 2, PReLU."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv = nn.Conv2d(channels, channels * 4, 3, padding=1)
        self.act = nn.PReLU(init=0.25)

    def forward(self, x):
        return self.act(pixel_shuffle(self.conv(x), 2))


class BranchHead(nn.Module):
    """3x3 conv to RGB with a tanh bound, giving outputs in [-1, 1]."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv = nn.Conv2d(channels, 3, 3, padding=1)

    def forward(self, x):
        return torch.tanh(self.conv(x))


class Generator(nn.Module):
    """Multi-branch super-resolution generator; see the module docstring."""

    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.config = config
        c = config.base_channels

        self.stem = nn.Conv2d(3, c, 3, padding=1)
        self.stem_act = nn.PReLU(init=0.25)
        self.trunk = nn.Sequential(
            *[ResidualBlock(c) for _ in range(config.residual_blocks_per_stage)]
        )
        self.trunk_conv = nn.Conv2d(c, c, 3, padding=1)
        self.trunk_bn = nn.BatchNorm2d(c, momentum=0.1)

        stages = []
        heads = []
        for k in range(config.num_stages):
            blocks = config.inter_stage_blocks if k < config.num_stages - 1 else 0
            stages.append(
                nn.Sequential(UpsampleStage(c), *[ResidualBlock(c) for _ in range(blocks)])
            )
            heads.append(BranchHead(c))
        self.stages = nn.ModuleList(stages)
        self.heads = nn.ModuleList(heads)

    def forward(self, lr: torch.Tensor) -> list:
        """LR batch in [-1, 1] to the list of branch outputs, small to large."""
        if lr.ndim != 4 or lr.shape[1] != 3:
            raise ShapeError(f"expected input of shape (N, 3, H, W), got {tuple(lr.shape)}")
        if lr.shape[-2] != self.config.lr_size or lr.shape[-1] != self.config.lr_size:
            raise ShapeError(
                f"expected {self.config.lr_size}x{self.config.lr_size} input, "
                f"got {lr.shape[-2]}x{lr.shape[-1]}"
            )
        feat = self.stem_act(self.stem(lr))
        x = self.trunk_bn(self.trunk_conv(self.trunk(feat))) + feat
        outputs = []
        for stage, head in zip(self.stages, self.heads):
            x = stage(x)
            outputs.append(head(x))
        return outputs


@dataclass
class MultiScaleOutput:
    """Ordered branch outputs with strictly doubling spatial sizes."""

    images: list

    def __post_init__(self):
        if not self.images:
            raise ShapeError("multi-scale output must contain at least one image")
        for a, b in zip(self.images, self.images[1:]):
            if b.shape[-2] != 2 * a.shape[-2] or b.shape[-1] != 2 * a.shape[-1]:
                raise ShapeError(
                    f"scales must double: got {tuple(a.shape[-2:])} then {tuple(b.shape[-2:])}"
                )

    @property
    def final(self):
        """The deepest (HR-sized) branch output."""
        return self.images[-1]

    def __len__(self):
        return len(self.images)

    def __iter__(self):
        return iter(self.images)


def seeded_init(model: nn.Module, seed: int) -> nn.Module:
    """Deterministic parameter initialization.

    Convolution and linear weights draw from a fan-in-scaled normal
    (std = sqrt(2 / fan_in) for hidden layers, sqrt(1 / fan_in) for a
    3-logit classifier head), biases zero, norm scale/offset 1/0, PReLU
    slopes 0.25. Walk order follows module registration, so equal seeds
    give bit-equal parameters.
    """
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for _, mod in model.named_modules():
            if isinstance(mod, nn.Conv2d):
                fan_in = mod.in_channels * mod.kernel_size[0] * mod.kernel_size[1]
                mod.weight.normal_(0.0, math.sqrt(2.0 / fan_in), generator=g)
                if mod.bias is not None:
                    mod.bias.zero_()
            elif isinstance(mod, nn.Linear):
                mod.weight.normal_(0.0, math.sqrt(1.0 / mod.in_features), generator=g)
                if mod.bias is not None:
                    mod.bias.zero_()
            elif isinstance(mod, nn.BatchNorm2d):
                mod.weight.fill_(1.0)
                mod.bias.zero_()
                mod.reset_running_stats()
            elif isinstance(mod, nn.PReLU):
                mod.weight.fill_(0.25)
    return model


def build_generator(config: GeneratorConfig, init_seed: int = 0) -> Generator:
    """Construct and deterministically initialize a generator."""
    return seeded_init(Generator(config), init_seed)


def generate(gen: Generator, lr) -> MultiScaleOutput:
    """Run the generator on an LR batch (numpy or torch, values in [-1, 1]).

    Gradient flow follows the caller's torch context; numpy inputs are
    converted to float32 tensors.
    """
    if isinstance(lr, np.ndarray):
        lr = torch.from_numpy(np.ascontiguousarray(lr, dtype=np.float32))
    return MultiScaleOutput(gen(lr))


def parameter_count(config: GeneratorConfig) -> int:
    """Closed-form parameter count; a pure function of the config."""

    def conv(cin, cout, k=3):
        return cout * cin * k * k + cout

    def block(c):
        return 2 * conv(c, c) + 2 * (2 * c) + 1  # two convs, two BN (weight+bias), PReLU

    c = config.base_channels
    total = conv(3, c) + 1  # stem + its PReLU
    total += config.residual_blocks_per_stage * block(c)
    total += conv(c, c) + 2 * c  # trunk conv + BN
    for k in range(config.num_stages):
        total += conv(c, 4 * c) + 1  # upsample conv + PReLU
        if k < config.num_stages - 1:
            total += config.inter_stage_blocks * block(c)
        total += conv(c, 3)  # branch head
    return total
