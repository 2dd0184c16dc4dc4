"""Identity-aware multi-scale face super-resolution.

An adversarially trained generator produces face images at progressively
doubling resolutions from a low-resolution input; a three-class pair
discriminator (fake / genuine / imposter) doubles as a face verifier, so
training preserves identity as well as visual quality. The package ships
the full loss stack (perceptual, adversarial verification,
color-consistency), a data pipeline with a synthetic face corpus, image
and identity metrics (PSNR/SSIM/FSIM, verification AUC, top-k), a
deterministic training loop with binary checkpoints, a CLI, and a
scikit-learn style estimator facade.
"""

__version__ = "0.1.0"

from .data import (
    DatasetHandle,
    FacePair,
    PairClass,
    PairKind,
    build_synthetic_handle,
    load_dataset,
    make_batch,
    make_hr_lr_pair,
    sample_pair,
    subset,
    write_synthetic_dataset,
)
from .discriminator import ClassProbs, Discriminator, DiscriminatorConfig, build_discriminator, discriminate
from .errors import (
    ConfigError,
    DatasetStructureError,
    HallucError,
    InsufficientDiversityError,
    IntegrityError,
    NumericError,
    ProtocolError,
    RangeError,
    ShapeError,
)
from .estimator import FaceHallucinator
from .generator import (
    Generator,
    GeneratorConfig,
    MultiScaleOutput,
    build_generator,
    generate,
    pixel_shuffle,
    pixel_unshuffle,
)
from .losses import (
    ColorStats,
    FeatureExtractor,
    LossWeights,
    adversarial_d_loss,
    adversarial_g_loss,
    color_consistency_loss,
    color_consistency_terms,
    image_stats,
    load_feature_extractor,
    perceptual_loss,
    save_feature_extractor,
    total_generator_loss,
)
from .metrics import (
    MetricReport,
    PixelProjectionEmbedder,
    TableEmbedder,
    auc_from_scores,
    evaluate_corpus,
    fsim,
    psnr,
    ssim,
    topk_accuracy,
    verification_auc,
)
from .synth import face_parameters, synth_face
from .training import (
    Checkpoint,
    OptimizerConfig,
    TrainConfig,
    checkpoints_equal,
    generator_sr_fn,
    hallucinate,
    rebuild_generator,
    train,
)

__all__ = [
    "ClassProbs",
    "Checkpoint",
    "ColorStats",
    "ConfigError",
    "DatasetHandle",
    "DatasetStructureError",
    "Discriminator",
    "DiscriminatorConfig",
    "FaceHallucinator",
    "FacePair",
    "FeatureExtractor",
    "Generator",
    "GeneratorConfig",
    "HallucError",
    "InsufficientDiversityError",
    "IntegrityError",
    "LossWeights",
    "MetricReport",
    "MultiScaleOutput",
    "NumericError",
    "OptimizerConfig",
    "PairClass",
    "PairKind",
    "PixelProjectionEmbedder",
    "ProtocolError",
    "RangeError",
    "ShapeError",
    "TableEmbedder",
    "TrainConfig",
    "adversarial_d_loss",
    "adversarial_g_loss",
    "auc_from_scores",
    "build_discriminator",
    "build_generator",
    "build_synthetic_handle",
    "checkpoints_equal",
    "color_consistency_loss",
    "color_consistency_terms",
    "discriminate",
    "evaluate_corpus",
    "face_parameters",
    "fsim",
    "generate",
    "generator_sr_fn",
    "hallucinate",
    "image_stats",
    "load_dataset",
    "load_feature_extractor",
    "make_batch",
    "make_hr_lr_pair",
    "perceptual_loss",
    "pixel_shuffle",
    "pixel_unshuffle",
    "psnr",
    "sample_pair",
    "save_feature_extractor",
    "ssim",
    "subset",
    "synth_face",
    "topk_accuracy",
    "total_generator_loss",
    "train",
    "verification_auc",
    "write_synthetic_dataset",
]
