"""Training objectives.

* Perceptual loss: per-layer mean squared feature distance between the
  super-resolved image and its HR reference, normalized by the layer's
  element count, computed on a small fixed (non-trainable) convolutional
  feature extractor.
* Adversarial verification losses: the discriminator maximizes the summed
  log-probabilities of the correct class over the four pair kinds; the
  generator maximizes log p_genuine on same-source SR pairs and
  log p_imposter on cross-identity SR pairs.
* Color-consistency regularization: penalizes differences of per-image RGB
  mean and covariance between adjacent generator scales.
* Total generator loss: perceptual sum + lambda_c * color sum
  - lambda_a * adversarial term (minimized).

All losses are pure functions of their inputs and invariant under batch
permutation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .discriminator import ClassProbs
from .errors import ConfigError, ShapeError
from .generator import seeded_init

#: Probabilities are floored here before taking logs, so a saturated
#: discriminator cannot push a loss to -inf.
LOG_PROB_FLOOR = 1e-12


@dataclass
class LossWeights:
    """All loss hyperparameters; every weight must be finite and >= 0."""

    lambda_c: float = 10.0  # color-consistency weight in the total loss
    lambda_a: float = 0.01  # adversarial weight in the total loss
    lambda_1: float = 1.0  # mean term inside the color loss
    lambda_2: float = 5.0  # covariance term inside the color loss
    perceptual_layers: dict = field(default_factory=lambda: {"shallow": 1.0, "deep": 1.0})

    def __post_init__(self):
        for name in ("lambda_c", "lambda_a", "lambda_1", "lambda_2"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"{name} must be finite and >= 0, got {v}")
        for layer, w in self.perceptual_layers.items():
            if not (math.isfinite(w) and w >= 0):
                raise ConfigError(f"perceptual layer {layer!r} weight must be >= 0, got {w}")


@dataclass(frozen=True)
class ExtractorLayer:
    name: str
    out_channels: int
    stride: int = 1


DEFAULT_EXTRACTOR_LAYERS = (
    ExtractorLayer("shallow", 12, 1),
    ExtractorLayer("deep", 24, 2),
)


class FeatureExtractor(nn.Module):
    """Small fixed-seed conv stack producing named feature maps.

    Weights are deterministic from the seed and frozen. The named feature
    map of each layer is the pre-activation convolution output (so the
    first layer is linear in the pixels and its feature distance behaves
    like a well-conditioned weighted MSE); tanh feeds the next layer and
    keeps the stack smooth, which the finite-difference gradient checks of
    the composed losses rely on. Inputs are expected in [-1, 1].
    """

    def __init__(self, layers=DEFAULT_EXTRACTOR_LAYERS, seed: int = 0):
        super().__init__()
        self.layer_specs = tuple(
            ExtractorLayer(l.name, l.out_channels, l.stride)
            if isinstance(l, ExtractorLayer)
            else ExtractorLayer(**l)
            for l in layers
        )
        if len({l.name for l in self.layer_specs}) != len(self.layer_specs):
            raise ConfigError("extractor layer names must be unique")
        self.seed = seed
        convs = []
        cin = 3
        for spec in self.layer_specs:
            convs.append(nn.Conv2d(cin, spec.out_channels, 3, stride=spec.stride, padding=1))
            cin = spec.out_channels
        self.convs = nn.ModuleList(convs)
        seeded_init(self, seed)
        for p in self.parameters():
            p.requires_grad_(False)

    @property
    def layer_names(self) -> list:
        return [spec.name for spec in self.layer_specs]

    @property
    def descriptor(self) -> str:
        spec = ",".join(f"{l.name}:{l.out_channels}s{l.stride}" for l in self.layer_specs)
        return f"conv-tanh({spec};seed={self.seed})"

    def forward(self, x) -> dict:
        """Feature maps for every named layer; ``x`` is (N, 3, H, W) in [-1, 1]."""
        if isinstance(x, np.ndarray):
            x = torch.from_numpy(np.ascontiguousarray(x, dtype=np.float32))
        feats = {}
        for spec, conv in zip(self.layer_specs, self.convs):
            pre = conv(x)
            feats[spec.name] = pre
            x = torch.tanh(pre)
        return feats

    features = forward  # alias used at call sites where "features" reads better


@dataclass
class ColorStats:
    """Per-image RGB mean and pixel covariance (population normalization)."""

    mu: np.ndarray  # (3,)
    sigma: np.ndarray  # (3, 3)

    def validate(self, tol: float = 1e-9):
        if not np.allclose(self.sigma, self.sigma.T, atol=tol):
            raise ShapeError("covariance is not symmetric")
        if np.linalg.eigvalsh(self.sigma).min() < -tol:
            raise ShapeError("covariance is not positive semidefinite")
        return self


def image_stats(image: np.ndarray) -> ColorStats:
    """Mean RGB vector and 3x3 pixel covariance of a single ``(3, H, W)`` image.

    mu = sum_k x_k / N and Sigma = sum_k (x_k - mu)(x_k - mu)^T / N with
    N the pixel count.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ShapeError(f"expected a single (3, H, W) image, got {image.shape}")
    flat = image.reshape(3, -1)
    mu = flat.mean(axis=1)
    d = flat - mu[:, None]
    sigma = (d @ d.T) / flat.shape[1]
    return ColorStats(mu=mu, sigma=sigma)


def batch_color_stats(x: torch.Tensor):
    """Differentiable per-image color stats for a (N, 3, H, W) batch."""
    n = x.shape[0]
    flat = x.reshape(n, 3, -1)
    mu = flat.mean(dim=-1)
    d = flat - mu.unsqueeze(-1)
    sigma = d @ d.transpose(1, 2) / flat.shape[-1]
    return mu, sigma


def _as_tensor(x) -> torch.Tensor:
    if isinstance(x, np.ndarray):
        return torch.from_numpy(np.ascontiguousarray(x, dtype=np.float32))
    return x


def color_consistency_terms(scales, lambda_1: float, lambda_2: float) -> list:
    """One scalar per adjacent-scale index i >= 1.

    Term i is the batch mean of
    lambda_1 * ||mu_i - mu_{i-1}||^2 + lambda_2 * ||Sigma_i - Sigma_{i-1}||_F^2.
    """
    images = list(scales.images) if hasattr(scales, "images") else list(scales)
    if len(images) < 2:
        raise ValueError("color consistency is undefined for a single-scale output")
    stats = [batch_color_stats(_as_tensor(x)) for x in images]
    terms = []
    for (mu_a, sig_a), (mu_b, sig_b) in zip(stats, stats[1:]):
        mean_term = ((mu_b - mu_a) ** 2).sum(dim=-1)
        cov_term = ((sig_b - sig_a) ** 2).sum(dim=(-2, -1))
        terms.append((lambda_1 * mean_term + lambda_2 * cov_term).mean())
    return terms


def color_consistency_loss(scales, lambda_1: float, lambda_2: float) -> torch.Tensor:
    """Sum of the per-adjacent-scale color terms."""
    return sum(color_consistency_terms(scales, lambda_1, lambda_2))


def perceptual_loss(extractor: FeatureExtractor, generated, reference, layer: str) -> torch.Tensor:
    """Feature-space squared distance at one layer, normalized per element.

    Returns the batch mean of ||phi(generated) - phi(reference)||^2 / N
    where N is the element count of the layer's feature map for a single
    image. Inputs are in [-1, 1]; gradients flow into ``generated``.
    """
    if layer not in extractor.layer_names:
        raise ConfigError(f"unknown extractor layer {layer!r}; have {extractor.layer_names}")
    fg = extractor.features(_as_tensor(generated))[layer]
    with torch.no_grad():
        fr = extractor.features(_as_tensor(reference))[layer]
    if fg.shape != fr.shape:
        raise ShapeError(f"feature shapes differ: {tuple(fg.shape)} vs {tuple(fr.shape)}")
    n_elems = fg[0].numel()
    per_image = ((fg - fr) ** 2).sum(dim=(1, 2, 3)) / n_elems
    return per_image.mean()


def perceptual_terms(extractor, generated, reference, layer_weights: dict) -> dict:
    """Weighted perceptual loss per configured layer (features computed once)."""
    for layer in layer_weights:
        if layer not in extractor.layer_names:
            raise ConfigError(f"unknown extractor layer {layer!r}; have {extractor.layer_names}")
    fg = extractor.features(_as_tensor(generated))
    with torch.no_grad():
        fr = extractor.features(_as_tensor(reference))
    out = {}
    for layer, weight in layer_weights.items():
        n_elems = fg[layer][0].numel()
        per_image = ((fg[layer] - fr[layer]) ** 2).sum(dim=(1, 2, 3)) / n_elems
        out[layer] = weight * per_image.mean()
    return out


def save_feature_extractor(extractor: FeatureExtractor, path):
    """Write extractor weights in the shared container format, with a layer manifest."""
    from .checkpoint import write_container

    meta = {
        "kind": "extractor",
        "seed": extractor.seed,
        "layers": [
            {"name": l.name, "out_channels": l.out_channels, "stride": l.stride}
            for l in extractor.layer_specs
        ],
    }
    blocks = {k: v.detach().cpu().numpy() for k, v in extractor.state_dict().items()}
    return write_container(path, meta, blocks)


def load_feature_extractor(path) -> FeatureExtractor:
    """Rebuild an extractor from a weight file written by :func:`save_feature_extractor`."""
    from .checkpoint import read_container
    from .errors import IntegrityError

    meta, blocks = read_container(path)
    if meta.get("kind") != "extractor":
        raise IntegrityError(f"{path}: not a feature-extractor weight file")
    fx = FeatureExtractor(layers=meta["layers"], seed=meta.get("seed", 0))
    state = fx.state_dict()
    if set(blocks) != set(state):
        raise IntegrityError(f"{path}: weight blocks do not match the layer manifest")
    fx.load_state_dict(
        {k: torch.from_numpy(np.ascontiguousarray(blocks[k])).reshape(state[k].shape)
         for k in state}
    )
    for p in fx.parameters():
        p.requires_grad_(False)
    return fx


def _floored_log_mean(p: torch.Tensor) -> torch.Tensor | None:
    if p is None or p.numel() == 0:
        return None
    if not bool(torch.isfinite(p).all()) or bool((p < 0).any()) or bool((p > 1.0 + 1e-6).any()):
        raise ValueError("probabilities must lie in (0, 1] after flooring")
    return torch.log(torch.clamp(p, min=LOG_PROB_FLOOR)).mean()


def adversarial_d_loss(
    probs_sr_self: ClassProbs | None,
    probs_sr_cross: ClassProbs | None,
    probs_real_same: ClassProbs | None,
    probs_real_other: ClassProbs | None,
) -> torch.Tensor:
    """Discriminator objective over the four pair kinds (maximized, <= 0).

    Sum of the batch-mean log-probabilities of the correct class: fake for
    both SR kinds, genuine for real same-identity pairs, imposter for real
    cross-identity pairs. Empty kinds contribute nothing.
    """
    terms = [
        _floored_log_mean(probs_sr_self.fake if probs_sr_self else None),
        _floored_log_mean(probs_sr_cross.fake if probs_sr_cross else None),
        _floored_log_mean(probs_real_same.genuine if probs_real_same else None),
        _floored_log_mean(probs_real_other.imposter if probs_real_other else None),
    ]
    present = [t for t in terms if t is not None]
    if not present:
        raise ValueError("discriminator loss needs at least one nonempty pair kind")
    return sum(present)


def adversarial_g_loss(
    probs_sr_self: ClassProbs | None,
    probs_sr_cross: ClassProbs | None,
) -> torch.Tensor:
    """Generator objective (maximized): log p_genuine on same-source SR pairs
    plus log p_imposter on cross-identity SR pairs."""
    terms = [
        _floored_log_mean(probs_sr_self.genuine if probs_sr_self else None),
        _floored_log_mean(probs_sr_cross.imposter if probs_sr_cross else None),
    ]
    present = [t for t in terms if t is not None]
    if not present:
        raise ValueError("generator adversarial loss needs at least one SR pair kind")
    return sum(present)


def total_generator_loss(perceptual, color, adversarial, weights: LossWeights):
    """Weighted total the generator minimizes.

    perceptual-sum + lambda_c * color-sum - lambda_a * adversarial. The
    component losses must come from the same batch; ``perceptual`` and
    ``color`` may be scalars or sequences of per-layer / per-scale terms.
    """

    def total(x):
        if isinstance(x, dict):
            x = list(x.values())
        if isinstance(x, (list, tuple)):
            return sum(x) if x else 0.0
        return x

    return total(perceptual) + weights.lambda_c * total(color) - weights.lambda_a * adversarial
