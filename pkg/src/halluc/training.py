"""Alternating adversarial training with deterministic checkpointing.

Per step: assemble one batch (the generator runs once, in training mode,
on all super-resolution pairs), update the discriminator by ascending its
verification objective ``d_steps_per_g_step`` times, then update the
generator by descending the total loss with gradients flowing through all
branches: perceptual terms on the final branch against the HR reference,
color-consistency terms across adjacent branches, and the adversarial term
through the discriminator.

Runs are bit-deterministic for a fixed (seed, config, dataset): batch
sampling derives a fresh RNG from (seed, step), so resuming from a step-N
checkpoint reproduces the uninterrupted trajectory exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .checkpoint import read_container, write_container
from .data import PAIR_ORDER, DatasetHandle, PairKind, make_batch
from .discriminator import Discriminator, DiscriminatorConfig, build_discriminator, discriminate
from .errors import ConfigError, IntegrityError, NumericError, ShapeError
from .generator import Generator, GeneratorConfig, build_generator
from .images import check_image_batch, clip01, save_image, signed_to_unit, unit_to_signed
from .losses import (
    FeatureExtractor,
    LossWeights,
    adversarial_d_loss,
    adversarial_g_loss,
    color_consistency_terms,
    perceptual_terms,
    total_generator_loss,
)

LOG_COLUMNS = ("step", "perceptual", "color", "adv_g", "adv_d", "total_g", "wall_ms")
LOSS_TAIL_LEN = 100


@dataclass
class OptimizerConfig:
    kind: str = "adam"
    lr_g: float = 1e-4
    lr_d: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999

    def __post_init__(self):
        if self.kind != "adam":
            raise ConfigError(f"unsupported optimizer kind {self.kind!r}")
        if self.lr_g <= 0 or self.lr_d <= 0:
            raise ConfigError("learning rates must be positive")


@dataclass
class TrainConfig:
    steps: int
    batch_size: int = 8
    pair_mix: tuple | None = None  # counts per PAIR_ORDER; None = equal quarters
    d_steps_per_g_step: int = 1
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seed: int = 0
    loss_weights: LossWeights = field(default_factory=LossWeights)
    checkpoint_every: int = 0  # 0 = final checkpoint only
    grad_clip_norm: float = 0.0  # 0 = disabled

    def __post_init__(self):
        if self.steps < 0:
            raise ConfigError(f"steps must be >= 0, got {self.steps}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.d_steps_per_g_step < 1:
            raise ConfigError("d_steps_per_g_step must be >= 1")
        if self.pair_mix is None:
            if self.batch_size % 4:
                raise ConfigError(
                    f"batch_size {self.batch_size} not divisible by 4; give an explicit pair_mix"
                )
            self.pair_mix = (self.batch_size // 4,) * 4
        self.pair_mix = tuple(int(m) for m in self.pair_mix)
        if len(self.pair_mix) != 4 or any(m < 0 for m in self.pair_mix):
            raise ConfigError(f"pair_mix must be 4 nonnegative counts, got {self.pair_mix}")
        if sum(self.pair_mix) != self.batch_size:
            raise ConfigError(
                f"pair_mix {self.pair_mix} does not sum to batch_size {self.batch_size}"
            )
        if self.pair_mix[0] + self.pair_mix[1] < 1:
            raise ConfigError("pair_mix needs at least one super-resolved pair kind")


@dataclass
class Checkpoint:
    """Full run state: both parameter stores, optimizer state, counters."""

    step: int
    fingerprint: str
    generator_config: GeneratorConfig
    discriminator_config: DiscriminatorConfig
    gen_state: dict
    disc_state: dict
    opt_state: dict
    loss_tail: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def save(self, path) -> Path:
        meta = {
            "kind": "train",
            "step": self.step,
            "fingerprint": self.fingerprint,
            "generator_config": asdict(self.generator_config),
            "discriminator_config": asdict(self.discriminator_config),
            "loss_tail": self.loss_tail,
            "extra": self.extra,
        }
        blocks = {}
        blocks.update({f"gen/{k}": v for k, v in self.gen_state.items()})
        blocks.update({f"disc/{k}": v for k, v in self.disc_state.items()})
        blocks.update(self.opt_state)
        return write_container(path, meta, blocks)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        meta, blocks = read_container(path)
        if meta.get("kind") != "train":
            raise IntegrityError(f"{path}: not a training checkpoint")
        gen_state = {}
        disc_state = {}
        opt_state = {}
        for name, arr in blocks.items():
            if name.startswith("gen/"):
                gen_state[name[4:]] = arr
            elif name.startswith("disc/"):
                disc_state[name[5:]] = arr
            else:
                opt_state[name] = arr
        return cls(
            step=int(meta["step"]),
            fingerprint=meta["fingerprint"],
            generator_config=GeneratorConfig(**meta["generator_config"]),
            discriminator_config=DiscriminatorConfig(**meta["discriminator_config"]),
            gen_state=gen_state,
            disc_state=disc_state,
            opt_state=opt_state,
            loss_tail=meta.get("loss_tail", []),
            extra=meta.get("extra", {}),
        )


def checkpoints_equal(a: Checkpoint, b: Checkpoint) -> bool:
    """Bitwise equality of parameters, optimizer state and counters."""
    if a.step != b.step or a.fingerprint != b.fingerprint:
        return False
    for sa, sb in ((a.gen_state, b.gen_state), (a.disc_state, b.disc_state),
                   (a.opt_state, b.opt_state)):
        if sa.keys() != sb.keys():
            return False
        for k in sa:
            if not np.array_equal(
                np.asarray(sa[k], dtype=np.float32), np.asarray(sb[k], dtype=np.float32)
            ):
                return False
    return True


def config_fingerprint(
    config: TrainConfig,
    gen_config: GeneratorConfig,
    disc_config: DiscriminatorConfig,
    extractor_descriptor: str,
    dataset: DatasetHandle,
) -> str:
    """Stable hash of everything that shapes the training trajectory.

    Run-length fields (steps, checkpoint_every) are excluded so a resumed
    run may extend the step budget.
    """
    payload = {
        "generator": asdict(gen_config),
        "discriminator": asdict(disc_config),
        "optimizer": asdict(config.optimizer),
        "loss_weights": {
            "lambda_c": config.loss_weights.lambda_c,
            "lambda_a": config.loss_weights.lambda_a,
            "lambda_1": config.loss_weights.lambda_1,
            "lambda_2": config.loss_weights.lambda_2,
            "perceptual_layers": dict(sorted(config.loss_weights.perceptual_layers.items())),
        },
        "batch_size": config.batch_size,
        "pair_mix": list(config.pair_mix),
        "d_steps_per_g_step": config.d_steps_per_g_step,
        "seed": config.seed,
        "grad_clip_norm": config.grad_clip_norm,
        "extractor": extractor_descriptor,
        "data": {"hr_size": dataset.hr_size, "scale_factor": dataset.scale_factor},
    }
    text = json.dumps(payload, sort_keys=True)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# torch state <-> numpy blocks


def module_state_arrays(module: torch.nn.Module) -> dict:
    return {k: v.detach().cpu().numpy() for k, v in module.state_dict().items()}


def load_module_state(module: torch.nn.Module, arrays: dict):
    target = module.state_dict()
    if set(arrays) != set(target):
        missing = sorted(set(target) - set(arrays))
        extra = sorted(set(arrays) - set(target))
        raise ConfigError(f"state mismatch: missing {missing}, unexpected {extra}")
    new_state = {
        k: torch.from_numpy(np.ascontiguousarray(arrays[k])).to(t.dtype).reshape(t.shape)
        for k, t in target.items()
    }
    module.load_state_dict(new_state)


def _optimizer_blocks(prefix: str, optimizer, param_names: list) -> dict:
    blocks = {}
    for idx, state in optimizer.state_dict()["state"].items():
        pname = param_names[idx]
        for key, val in state.items():
            arr = val.detach().cpu().numpy() if torch.is_tensor(val) else np.asarray(val)
            blocks[f"{prefix}/{pname}/{key}"] = np.asarray(arr, dtype=np.float32)
    return blocks


def _load_optimizer_blocks(prefix: str, optimizer, param_names: list, blocks: dict):
    per_param: dict[str, dict] = {}
    for name, arr in blocks.items():
        if not name.startswith(prefix + "/"):
            continue
        pname, key = name[len(prefix) + 1 :].rsplit("/", 1)
        per_param.setdefault(pname, {})[key] = arr
    if not per_param:
        return  # checkpoint taken before the first update: fresh optimizer
    sd = optimizer.state_dict()
    state = {}
    for idx, pname in enumerate(param_names):
        entries = per_param.get(pname)
        if not entries:
            continue
        # arr.copy() keeps 0-dim shapes (Adam's per-param step counter) intact.
        state[idx] = {key: torch.from_numpy(arr.copy()) for key, arr in entries.items()}
    sd["state"] = state
    optimizer.load_state_dict(sd)


# ---------------------------------------------------------------------------
# Trainer


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    checkpoint_path: Path
    log_path: Path
    history: list


def _step_rng(seed: int, step: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, step, 0x5E9]))


def _require_finite(value: float, term: str, step: int) -> float:
    if not math.isfinite(value):
        raise NumericError(f"{term} became non-finite at step {step}", term=term, step=step)
    return value


def _check_parameters_finite(module: torch.nn.Module, what: str, step: int):
    for name, p in module.named_parameters():
        if not bool(torch.isfinite(p).all()):
            raise NumericError(
                f"{what} parameter {name} non-finite after step {step}",
                term=what,
                step=step,
            )


def train(
    dataset: DatasetHandle,
    config: TrainConfig,
    out_dir,
    generator_config: GeneratorConfig | None = None,
    discriminator_config: DiscriminatorConfig | None = None,
    extractor: FeatureExtractor | None = None,
    resume_from=None,
) -> TrainResult:
    """Run the adversarial loop; returns the final checkpoint and log path.

    Aborts with :class:`NumericError` (naming the offending term and step)
    if any loss component or parameter becomes non-finite.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if generator_config is None:
        generator_config = GeneratorConfig(
            lr_size=dataset.lr_size, scale_factor=dataset.scale_factor
        )
    if discriminator_config is None:
        discriminator_config = DiscriminatorConfig(
            hr_size=dataset.hr_size, num_scales=generator_config.num_stages
        )
    if extractor is None:
        extractor = FeatureExtractor(seed=0)

    if generator_config.lr_size != dataset.lr_size:
        raise ConfigError(
            f"generator lr_size {generator_config.lr_size} != dataset lr_size {dataset.lr_size}"
        )
    if generator_config.scale_factor != dataset.scale_factor:
        raise ConfigError("generator and dataset scale factors differ")
    if discriminator_config.hr_size != dataset.hr_size:
        raise ConfigError("discriminator hr_size does not match the dataset")
    if discriminator_config.num_scales != generator_config.num_stages:
        raise ConfigError(
            f"discriminator num_scales {discriminator_config.num_scales} must equal "
            f"the generator branch count {generator_config.num_stages}"
        )

    fingerprint = config_fingerprint(
        config, generator_config, discriminator_config, extractor.descriptor, dataset
    )

    generator = build_generator(generator_config, init_seed=config.seed)
    discriminator = build_discriminator(discriminator_config, init_seed=config.seed + 1)
    opt = config.optimizer
    g_params = list(generator.parameters())
    d_params = list(discriminator.parameters())
    g_opt = torch.optim.Adam(g_params, lr=opt.lr_g, betas=(opt.beta1, opt.beta2))
    d_opt = torch.optim.Adam(d_params, lr=opt.lr_d, betas=(opt.beta1, opt.beta2))
    g_names = [n for n, _ in generator.named_parameters()]
    d_names = [n for n, _ in discriminator.named_parameters()]

    start_step = 0
    loss_tail: list = []
    if resume_from is not None:
        ckpt = resume_from if isinstance(resume_from, Checkpoint) else Checkpoint.load(resume_from)
        if ckpt.fingerprint != fingerprint:
            raise ConfigError(
                "checkpoint fingerprint does not match this configuration; "
                "refusing to resume"
            )
        load_module_state(generator, ckpt.gen_state)
        load_module_state(discriminator, ckpt.disc_state)
        _load_optimizer_blocks("opt_g", g_opt, g_names, ckpt.opt_state)
        _load_optimizer_blocks("opt_d", d_opt, d_names, ckpt.opt_state)
        start_step = ckpt.step
        loss_tail = list(ckpt.loss_tail)
        if start_step > config.steps:
            raise ConfigError(
                f"checkpoint is at step {start_step}, beyond the configured {config.steps}"
            )

    log_path = out_dir / "train_log.csv"
    history: list = []
    log_mode = "a" if (resume_from is not None and log_path.exists()) else "w"

    def make_checkpoint(step: int) -> Checkpoint:
        opt_state = {}
        opt_state.update(_optimizer_blocks("opt_g", g_opt, g_names))
        opt_state.update(_optimizer_blocks("opt_d", d_opt, d_names))
        return Checkpoint(
            step=step,
            fingerprint=fingerprint,
            generator_config=generator_config,
            discriminator_config=discriminator_config,
            gen_state=module_state_arrays(generator),
            disc_state=module_state_arrays(discriminator),
            opt_state=opt_state,
            loss_tail=loss_tail[-LOSS_TAIL_LEN:],
            extra={"hr_size": dataset.hr_size, "scale_factor": dataset.scale_factor},
        )

    def gen_forward(lr_np: np.ndarray):
        return generator(torch.from_numpy(np.ascontiguousarray(lr_np, dtype=np.float32)))

    weights = config.loss_weights

    with open(log_path, log_mode, newline="", encoding="utf-8") as log_file:
        writer = csv.writer(log_file)
        if log_mode == "w":
            writer.writerow(LOG_COLUMNS)

        for step in range(start_step, config.steps):
            t0 = time.perf_counter()
            rng = _step_rng(config.seed, step)
            generator.train()
            batch = make_batch(dataset, gen_forward, config.batch_size, config.pair_mix, rng)
            groups = batch.groups

            def probs_for(kind: PairKind, detach: bool):
                group = groups.get(kind)
                if group is None:
                    return None
                rights = [
                    r.detach() if (detach and torch.is_tensor(r)) else r
                    for r in group.right_scales
                ]
                return discriminate(discriminator, group.left_scales, rights)

            # Discriminator ascends its objective on detached SR images.
            adv_d_value = 0.0
            for _ in range(config.d_steps_per_g_step):
                d_opt.zero_grad()
                adv_d = adversarial_d_loss(*(probs_for(k, detach=True) for k in PAIR_ORDER))
                adv_d_value = _require_finite(float(adv_d.detach()), "adv_d", step)
                (-adv_d).backward()
                if config.grad_clip_norm > 0:
                    torch.nn.utils.clip_grad_norm_(d_params, config.grad_clip_norm)
                d_opt.step()
            _check_parameters_finite(discriminator, "discriminator", step)

            # Generator descends the total loss through all branches.
            g_opt.zero_grad()
            adv_g = adversarial_g_loss(
                probs_for(PairKind.SR_SELF, detach=False),
                probs_for(PairKind.SR_CROSS, detach=False),
            )
            reference = unit_to_signed(batch.sr_reference).astype(np.float32)
            perc = perceptual_terms(
                extractor, batch.generated[-1], reference, weights.perceptual_layers
            )
            color = color_consistency_terms(batch.generated, weights.lambda_1, weights.lambda_2)
            total = total_generator_loss(perc, color, adv_g, weights)

            perc_value = _require_finite(float(sum(perc.values()).detach()), "perceptual", step)
            color_value = _require_finite(float(sum(color).detach()), "color", step)
            adv_g_value = _require_finite(float(adv_g.detach()), "adv_g", step)
            total_value = _require_finite(float(total.detach()), "total_g", step)

            total.backward()
            if config.grad_clip_norm > 0:
                torch.nn.utils.clip_grad_norm_(g_params, config.grad_clip_norm)
            g_opt.step()
            _check_parameters_finite(generator, "generator", step)

            wall_ms = (time.perf_counter() - t0) * 1000.0
            row = {
                "step": step + 1,
                "perceptual": perc_value,
                "color": color_value,
                "adv_g": adv_g_value,
                "adv_d": adv_d_value,
                "total_g": total_value,
                "wall_ms": wall_ms,
            }
            history.append(row)
            loss_tail.append(row)
            loss_tail = loss_tail[-LOSS_TAIL_LEN:]
            # repr keeps the components round-trippable so the logged total
            # can be recomputed from the logged terms.
            writer.writerow([row[c] if c == "step" else repr(row[c]) for c in LOG_COLUMNS])

            done = step + 1
            if config.checkpoint_every > 0 and done % config.checkpoint_every == 0:
                make_checkpoint(done).save(out_dir / f"checkpoint_step{done:06d}.ckpt")

    final = make_checkpoint(max(config.steps, start_step))
    final_path = out_dir / "checkpoint_final.ckpt"
    final.save(final_path)
    return TrainResult(
        checkpoint=final, checkpoint_path=final_path, log_path=log_path, history=history
    )


# ---------------------------------------------------------------------------
# Inference


def rebuild_generator(ckpt: Checkpoint) -> Generator:
    """Generator restored from a checkpoint, in inference mode."""
    gen = Generator(ckpt.generator_config)
    load_module_state(gen, ckpt.gen_state)
    gen.eval()
    return gen


def rebuild_discriminator(ckpt: Checkpoint) -> Discriminator:
    disc = Discriminator(ckpt.discriminator_config)
    load_module_state(disc, ckpt.disc_state)
    disc.eval()
    return disc


def generator_sr_fn(gen: Generator):
    """Wrap a generator as a [0,1] LR batch -> [0,1] HR batch callable."""
    gen.eval()

    def fn(lr_batch01: np.ndarray) -> np.ndarray:
        x = unit_to_signed(np.asarray(lr_batch01, dtype=np.float32)).astype(np.float32)
        with torch.no_grad():
            outputs = gen(torch.from_numpy(x))
        return clip01(signed_to_unit(outputs[-1].numpy())).astype(np.float32)

    return fn


def hallucinate(ckpt, lr_images: np.ndarray, out_dir, names=None) -> list:
    """Super-resolve LR images with a checkpointed generator and write PNGs.

    ``lr_images`` is a [0,1] batch whose spatial size must match the
    checkpoint's LR size. Output files are ``<name>_sr.png`` (or indexed
    when no names are given), written deterministically in input order.
    """
    if not isinstance(ckpt, Checkpoint):
        ckpt = Checkpoint.load(ckpt)
    lr_images = check_image_batch(np.asarray(lr_images), name="lr images")
    lr_size = ckpt.generator_config.lr_size
    if lr_images.shape[-2] != lr_size or lr_images.shape[-1] != lr_size:
        raise ShapeError(
            f"checkpoint expects {lr_size}x{lr_size} inputs, "
            f"got {lr_images.shape[-2]}x{lr_images.shape[-1]}"
        )
    if names is not None and len(names) != lr_images.shape[0]:
        raise ShapeError("names count does not match the number of images")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sr = generator_sr_fn(rebuild_generator(ckpt))(lr_images)
    written = []
    for i, img in enumerate(sr):
        stem = names[i] if names is not None else f"{i:04d}"
        written.append(save_image(img, out_dir / f"{stem}_sr.png"))
    return written
