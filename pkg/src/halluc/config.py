"""Run configuration files.

A run config is a YAML document with up to six sections: ``data``,
``generator``, ``discriminator``, ``losses``, ``training`` and ``eval``.
Every field is optional and falls back to the documented default; unknown
sections or keys are rejected by exact name. ``parse(serialize(c)) == c``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .discriminator import DiscriminatorConfig
from .errors import ConfigError
from .generator import GeneratorConfig
from .losses import FeatureExtractor, LossWeights, load_feature_extractor
from .training import OptimizerConfig, TrainConfig


@dataclass
class DataSection:
    path: str | None = None  # dataset root folder
    hr_size: int = 128
    scale_factor: int = 4


@dataclass
class GeneratorSection:
    base_channels: int = 64
    residual_blocks_per_stage: int = 4
    inter_stage_blocks: int = 2


@dataclass
class DiscriminatorSection:
    base_channels: int = 64
    leaky_slope: float = 0.2
    num_scales: int | None = None  # None: match the generator branch count


@dataclass
class LossesSection:
    lambda_c: float = 10.0
    lambda_a: float = 0.01
    lambda_1: float = 1.0
    lambda_2: float = 5.0
    perceptual_layers: dict = field(default_factory=lambda: {"shallow": 1.0, "deep": 1.0})
    extractor_seed: int = 0
    extractor_path: str | None = None  # external weight file overrides the seed


@dataclass
class TrainingSection:
    steps: int = 2000
    batch_size: int = 8
    pair_mix: list | None = None
    d_steps_per_g_step: int = 1
    lr_g: float = 1e-4
    lr_d: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    seed: int = 0
    checkpoint_every: int = 0
    grad_clip_norm: float = 0.0


@dataclass
class EvalSection:
    embedder: str = "none"  # "none" | "pixel" | path to an embedding table
    embed_dim: int = 64
    pairs_per_side: int = 200
    seed: int = 0


_SECTIONS = {
    "data": DataSection,
    "generator": GeneratorSection,
    "discriminator": DiscriminatorSection,
    "losses": LossesSection,
    "training": TrainingSection,
    "eval": EvalSection,
}


@dataclass
class RunConfig:
    data: DataSection = field(default_factory=DataSection)
    generator: GeneratorSection = field(default_factory=GeneratorSection)
    discriminator: DiscriminatorSection = field(default_factory=DiscriminatorSection)
    losses: LossesSection = field(default_factory=LossesSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    eval: EvalSection = field(default_factory=EvalSection)

    @classmethod
    def from_mapping(cls, mapping: dict) -> "RunConfig":
        if mapping is None:
            mapping = {}
        if not isinstance(mapping, dict):
            raise ConfigError(f"config root must be a mapping, got {type(mapping).__name__}")
        unknown = set(mapping) - set(_SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config section: {sorted(unknown)[0]}")
        kwargs = {}
        for name, section_cls in _SECTIONS.items():
            raw = mapping.get(name) or {}
            if not isinstance(raw, dict):
                raise ConfigError(f"section {name!r} must be a mapping")
            allowed = {f.name for f in fields(section_cls)}
            for key in raw:
                if key not in allowed:
                    raise ConfigError(f"unknown config key: {name}.{key}")
            kwargs[name] = section_cls(**raw)
        return cls(**kwargs)

    def to_mapping(self) -> dict:
        return asdict(self)

    # -- wiring into the module configs -------------------------------------

    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(
            lr_size=self.data.hr_size // self.data.scale_factor,
            scale_factor=self.data.scale_factor,
            base_channels=self.generator.base_channels,
            residual_blocks_per_stage=self.generator.residual_blocks_per_stage,
            inter_stage_blocks=self.generator.inter_stage_blocks,
        )

    def discriminator_config(self) -> DiscriminatorConfig:
        gen = self.generator_config()
        num_scales = self.discriminator.num_scales
        return DiscriminatorConfig(
            hr_size=self.data.hr_size,
            num_scales=gen.num_stages if num_scales is None else num_scales,
            base_channels=self.discriminator.base_channels,
            leaky_slope=self.discriminator.leaky_slope,
        )

    def loss_weights(self) -> LossWeights:
        return LossWeights(
            lambda_c=self.losses.lambda_c,
            lambda_a=self.losses.lambda_a,
            lambda_1=self.losses.lambda_1,
            lambda_2=self.losses.lambda_2,
            perceptual_layers=dict(self.losses.perceptual_layers),
        )

    def feature_extractor(self) -> FeatureExtractor:
        if self.losses.extractor_path:
            return load_feature_extractor(self.losses.extractor_path)
        return FeatureExtractor(seed=self.losses.extractor_seed)

    def train_config(self) -> TrainConfig:
        t = self.training
        return TrainConfig(
            steps=t.steps,
            batch_size=t.batch_size,
            pair_mix=None if t.pair_mix is None else tuple(t.pair_mix),
            d_steps_per_g_step=t.d_steps_per_g_step,
            optimizer=OptimizerConfig(lr_g=t.lr_g, lr_d=t.lr_d, beta1=t.beta1, beta2=t.beta2),
            seed=t.seed,
            loss_weights=self.loss_weights(),
            checkpoint_every=t.checkpoint_every,
            grad_clip_norm=t.grad_clip_norm,
        )


def serialize_config(config: RunConfig) -> str:
    """Canonical YAML text (stable key order)."""
    mapping = config.to_mapping()
    for section in mapping.values():
        for key, val in section.items():
            if isinstance(val, tuple):
                section[key] = list(val)
    return yaml.safe_dump(mapping, sort_keys=True, default_flow_style=False)


def parse_config(text: str) -> RunConfig:
    try:
        mapping = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    cfg = RunConfig.from_mapping(mapping)
    if cfg.training.pair_mix is not None:
        cfg.training.pair_mix = [int(m) for m in cfg.training.pair_mix]
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"))


def save_config(config: RunConfig, path) -> Path:
    path = Path(path)
    path.write_text(serialize_config(config), encoding="utf-8")
    return path
