"""Scikit-learn style estimator facade.

``FaceHallucinator`` wraps dataset handling, adversarial training and
checkpointed inference behind fit/transform so the model composes with
sklearn pipelines and clone/get_params tooling. ``X`` is an image batch in
channel-first layout, values in [0, 1]: HR faces with identity labels
``y`` for fit, LR faces for transform.
"""

from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .data import DatasetHandle, Record, load_dataset
from .errors import DatasetStructureError, ShapeError
from .generator import GeneratorConfig
from .images import check_image_batch
from .losses import FeatureExtractor, LossWeights
from .training import OptimizerConfig, TrainConfig, generator_sr_fn, rebuild_generator, train


def _handle_from_arrays(X, y, hr_size, scale_factor) -> DatasetHandle:
    X = check_image_batch(np.asarray(X, dtype=np.float32), name="X")
    if X.shape[-2] != hr_size or X.shape[-1] != hr_size:
        raise ShapeError(f"expected {hr_size}x{hr_size} HR images, got {X.shape[-2:]}")
    if y is None:
        raise DatasetStructureError("identity labels y are required to sample training pairs")
    y = np.asarray(y)
    if y.shape != (X.shape[0],):
        raise ShapeError(f"y must have shape ({X.shape[0]},), got {y.shape}")
    ident_ids = {label: i for i, label in enumerate(sorted(set(y.tolist())))}
    records = []
    identity_index: dict[int, list] = {}
    for i, (img, label) in enumerate(zip(X, y.tolist())):
        ident = ident_ids[label]
        identity_index.setdefault(ident, []).append(i)
        records.append(Record(ident, np.asarray(img), f"{label}/{i:04d}"))
    return DatasetHandle(
        records=tuple(records),
        identity_index={k: tuple(v) for k, v in identity_index.items()},
        hr_size=hr_size,
        scale_factor=scale_factor,
    )


class FaceHallucinator(BaseEstimator, TransformerMixin):
    """Identity-aware face super-resolver with a fit/transform interface.

    Parameters
    ----------
    hr_size : side length of the HR training faces.
    scale_factor : 4 or 8; LR inputs are hr_size / scale_factor.
    base_channels, residual_blocks_per_stage, inter_stage_blocks :
        generator width and depth.
    steps, batch_size, lr_g, lr_d : training loop settings.
    lambda_c, lambda_a, lambda_1, lambda_2 : loss weights.
    seed : controls initialization and batch sampling; fixed seeds give
        bit-reproducible fits.
    """

    def __init__(
        self,
        hr_size: int = 64,
        scale_factor: int = 4,
        base_channels: int = 32,
        residual_blocks_per_stage: int = 3,
        inter_stage_blocks: int = 1,
        steps: int = 500,
        batch_size: int = 8,
        lr_g: float = 1e-4,
        lr_d: float = 1e-4,
        lambda_c: float = 10.0,
        lambda_a: float = 0.01,
        lambda_1: float = 1.0,
        lambda_2: float = 5.0,
        extractor_seed: int = 0,
        seed: int = 0,
    ):
        self.hr_size = hr_size
        self.scale_factor = scale_factor
        self.base_channels = base_channels
        self.residual_blocks_per_stage = residual_blocks_per_stage
        self.inter_stage_blocks = inter_stage_blocks
        self.steps = steps
        self.batch_size = batch_size
        self.lr_g = lr_g
        self.lr_d = lr_d
        self.lambda_c = lambda_c
        self.lambda_a = lambda_a
        self.lambda_1 = lambda_1
        self.lambda_2 = lambda_2
        self.extractor_seed = extractor_seed
        self.seed = seed

    def _dataset(self, X, y) -> DatasetHandle:
        if isinstance(X, DatasetHandle):
            return X
        if isinstance(X, (str, Path)):
            return load_dataset(X, self.hr_size, self.scale_factor)
        return _handle_from_arrays(X, y, self.hr_size, self.scale_factor)

    def fit(self, X, y=None):
        """Train on HR faces.

        ``X`` may be an (N, 3, hr_size, hr_size) array in [0, 1] with
        identity labels ``y``, a dataset folder path, or a DatasetHandle.
        """
        dataset = self._dataset(X, y)
        config = TrainConfig(
            steps=self.steps,
            batch_size=self.batch_size,
            optimizer=OptimizerConfig(lr_g=self.lr_g, lr_d=self.lr_d),
            seed=self.seed,
            loss_weights=LossWeights(
                lambda_c=self.lambda_c,
                lambda_a=self.lambda_a,
                lambda_1=self.lambda_1,
                lambda_2=self.lambda_2,
            ),
        )
        gen_config = GeneratorConfig(
            lr_size=dataset.lr_size,
            scale_factor=dataset.scale_factor,
            base_channels=self.base_channels,
            residual_blocks_per_stage=self.residual_blocks_per_stage,
            inter_stage_blocks=self.inter_stage_blocks,
        )
        with tempfile.TemporaryDirectory(prefix="halluc-fit-") as tmp:
            result = train(
                dataset,
                config,
                tmp,
                generator_config=gen_config,
                extractor=FeatureExtractor(seed=self.extractor_seed),
            )
        self.checkpoint_ = result.checkpoint
        self.history_ = result.history
        self._sr_fn = generator_sr_fn(rebuild_generator(self.checkpoint_))
        return self

    def transform(self, X) -> np.ndarray:
        """Super-resolve an (N, 3, lr, lr) batch in [0, 1] to HR in [0, 1]."""
        if not hasattr(self, "checkpoint_"):
            raise RuntimeError("this FaceHallucinator instance is not fitted yet")
        X = check_image_batch(np.asarray(X, dtype=np.float32), name="X")
        lr = self.hr_size // self.scale_factor
        if X.shape[-2] != lr or X.shape[-1] != lr:
            raise ShapeError(f"expected {lr}x{lr} LR inputs, got {X.shape[-2:]}")
        return self._sr_fn(X)

    def predict(self, X) -> np.ndarray:
        """Alias of :meth:`transform`."""
        return self.transform(X)
