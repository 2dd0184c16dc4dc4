"""Dataset handling and the four-way pair sampling protocol.

A dataset is a flat list of (identity, image) records, loaded lazily from a
``root/<identity>/<image>`` folder tree or built in memory from the
synthetic face generator. Training consumes labeled two-image samples of
four kinds:

* ``SR_SELF``   - real HR image vs. the super-resolved LR of the very same
  image; the discriminator should call it ``FAKE``.
* ``SR_CROSS``  - real HR of one identity vs. the super-resolved LR of an
  image of a different identity; also ``FAKE``.
* ``REAL_SAME`` - two distinct real HR images of one identity; ``GENUINE``.
* ``REAL_OTHER``- real HR images of two different identities; ``IMPOSTER``.

Handles are immutable after load and safe to share across threads; all
sampling goes through an explicit numpy Generator so parallel samplers can
use independent streams.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import DatasetStructureError, InsufficientDiversityError, ShapeError
from .images import (
    box_downsample,
    center_crop,
    check_image,
    load_image,
    save_image,
    unit_to_signed,
)
from .synth import synth_face

IMAGE_SUFFIXES = {".png", ".bmp", ".tif", ".tiff", ".webp", ".jpg", ".jpeg"}


class PairKind(enum.Enum):
    SR_SELF = "sr_self"
    SR_CROSS = "sr_cross"
    REAL_SAME = "real_same"
    REAL_OTHER = "real_other"


class PairClass(enum.Enum):
    FAKE = 0
    GENUINE = 1
    IMPOSTER = 2


#: Discriminator target for each pair kind.
PAIR_TARGET = {
    PairKind.SR_SELF: PairClass.FAKE,
    PairKind.SR_CROSS: PairClass.FAKE,
    PairKind.REAL_SAME: PairClass.GENUINE,
    PairKind.REAL_OTHER: PairClass.IMPOSTER,
}

#: Canonical kind order used by pair-mix vectors (batch composition).
PAIR_ORDER = (PairKind.SR_SELF, PairKind.SR_CROSS, PairKind.REAL_SAME, PairKind.REAL_OTHER)


class Record(NamedTuple):
    identity_id: int
    ref: object  # Path to a raster file, or an in-memory (3, H, W) [0,1] array
    image_id: str


@dataclass(frozen=True)
class DatasetHandle:
    """Immutable view of a corpus plus its HR/LR geometry."""

    records: tuple
    identity_index: dict
    hr_size: int
    scale_factor: int
    skipped: int = 0
    root: Path | None = None

    @property
    def lr_size(self) -> int:
        return self.hr_size // self.scale_factor

    @property
    def identities(self) -> list:
        return sorted(self.identity_index)

    def __len__(self) -> int:
        return len(self.records)

    def source_image(self, index: int) -> np.ndarray:
        """Decode the raw source image (no cropping)."""
        ref = self.records[index].ref
        if isinstance(ref, np.ndarray):
            return ref
        return load_image(ref)

    def hr_lr(self, index: int):
        """HR center crop and its LR counterpart for one record."""
        return make_hr_lr_pair(self.source_image(index), self.hr_size, self.scale_factor)

    def hr_image(self, index: int) -> np.ndarray:
        return self.hr_lr(index)[0]


def _validate_geometry(hr_size: int, scale_factor: int):
    if scale_factor not in (4, 8):
        raise DatasetStructureError(f"scale_factor must be 4 or 8, got {scale_factor}")
    if hr_size % scale_factor:
        raise DatasetStructureError(
            f"hr_size {hr_size} not divisible by scale_factor {scale_factor}"
        )


def load_dataset(root_path, hr_size: int, scale_factor: int) -> DatasetHandle:
    """Index a ``root/<identity>/<images>`` tree into a DatasetHandle.

    Identity ids follow sorted directory-name order; images are decoded
    lazily. Files without a known raster suffix are skipped and counted in
    ``handle.skipped``. An identity directory with no usable image is a
    structural error.
    """
    _validate_geometry(hr_size, scale_factor)
    root = Path(root_path)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root is not a readable directory: {root}")

    identity_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not identity_dirs:
        raise DatasetStructureError(f"no identity subdirectories under {root}")

    records: list[Record] = []
    identity_index: dict[int, tuple] = {}
    skipped = 0
    for identity_id, ident_dir in enumerate(identity_dirs):
        indices = []
        for f in sorted(ident_dir.iterdir()):
            if not f.is_file():
                continue
            if f.suffix.lower() not in IMAGE_SUFFIXES:
                skipped += 1
                continue
            indices.append(len(records))
            records.append(Record(identity_id, f, f"{ident_dir.name}/{f.stem}"))
        if not indices:
            raise DatasetStructureError(f"identity directory has no images: {ident_dir}")
        identity_index[identity_id] = tuple(indices)

    return DatasetHandle(
        records=tuple(records),
        identity_index=identity_index,
        hr_size=hr_size,
        scale_factor=scale_factor,
        skipped=skipped,
        root=root,
    )


def subset(dataset: DatasetHandle, indices: Sequence[int]) -> DatasetHandle:
    """New handle restricted to the given record indices (order preserved)."""
    records = tuple(dataset.records[i] for i in indices)
    identity_index: dict[int, list] = {}
    for pos, rec in enumerate(records):
        identity_index.setdefault(rec.identity_id, []).append(pos)
    return DatasetHandle(
        records=records,
        identity_index={k: tuple(v) for k, v in identity_index.items()},
        hr_size=dataset.hr_size,
        scale_factor=dataset.scale_factor,
        skipped=dataset.skipped,
        root=dataset.root,
    )


def _synth_seeds(seed: int, identity: int, variation: int):
    ss = np.random.SeedSequence([seed, identity])
    identity_seed = int(ss.generate_state(1)[0])
    vs = np.random.SeedSequence([seed, identity, variation, 1])
    variation_seed = int(vs.generate_state(1)[0])
    return identity_seed, variation_seed


def build_synthetic_handle(
    n_identities: int,
    n_variations: int,
    hr_size: int,
    scale_factor: int,
    seed: int = 0,
) -> DatasetHandle:
    """In-memory synthetic corpus: the default desk-scale test dataset."""
    _validate_geometry(hr_size, scale_factor)
    if n_identities < 1 or n_variations < 1:
        raise DatasetStructureError("need at least one identity and one variation")
    records: list[Record] = []
    identity_index: dict[int, tuple] = {}
    for i in range(n_identities):
        indices = []
        for v in range(n_variations):
            ident_seed, var_seed = _synth_seeds(seed, i, v)
            img = synth_face(ident_seed, var_seed, hr_size)
            indices.append(len(records))
            records.append(Record(i, img, f"id{i:03d}/var{v:03d}"))
        identity_index[i] = tuple(indices)
    return DatasetHandle(
        records=tuple(records),
        identity_index=identity_index,
        hr_size=hr_size,
        scale_factor=scale_factor,
    )


def write_synthetic_dataset(
    out_dir,
    n_identities: int,
    n_variations: int,
    size: int,
    seed: int = 0,
) -> Path:
    """Write a synthetic corpus as PNG files in the loadable folder layout."""
    if n_identities < 1 or n_variations < 1:
        raise DatasetStructureError("need at least one identity and one variation")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(n_identities):
        ident_dir = out / f"id{i:03d}"
        ident_dir.mkdir(exist_ok=True)
        for v in range(n_variations):
            ident_seed, var_seed = _synth_seeds(seed, i, v)
            save_image(synth_face(ident_seed, var_seed, size), ident_dir / f"var{v:03d}.png")
    return out


def make_hr_lr_pair(image: np.ndarray, hr_size: int, scale_factor: int):
    """Centered HR crop plus its block-averaged LR counterpart.

    Deterministic: equal inputs give bit-equal outputs.
    """
    if scale_factor not in (4, 8):
        raise ShapeError(f"scale_factor must be 4 or 8, got {scale_factor}")
    if hr_size % scale_factor:
        raise ShapeError(f"hr_size {hr_size} not divisible by factor {scale_factor}")
    image = check_image(np.asarray(image), name="source image")
    hr = np.ascontiguousarray(center_crop(image, hr_size))
    lr = box_downsample(hr, scale_factor)
    return hr, lr


@dataclass
class FacePair:
    """One labeled two-image sample.

    ``left`` is always a real HR image in [0, 1]. ``right_source`` is the LR
    image awaiting super-resolution for the SR kinds, or a real HR image for
    the real kinds.
    """

    kind: PairKind
    left: np.ndarray
    right_source: np.ndarray
    left_identity: int
    right_identity: int
    left_index: int
    right_index: int
    target_class: PairClass = field(init=False)

    def __post_init__(self):
        self.target_class = PAIR_TARGET[self.kind]


def sample_pair(dataset: DatasetHandle, kind: PairKind, rng: np.random.Generator) -> FacePair:
    """Draw one pair of the given kind, uniformly over the valid choices.

    SR kinds realize the LR side through :func:`make_hr_lr_pair` on the
    chosen source record.
    """
    n = len(dataset.records)
    if n == 0:
        raise InsufficientDiversityError(kind, "dataset has no records")

    if kind is PairKind.SR_SELF:
        i = int(rng.integers(n))
        hr, lr = dataset.hr_lr(i)
        rec = dataset.records[i]
        return FacePair(kind, hr, lr, rec.identity_id, rec.identity_id, i, i)

    if kind is PairKind.SR_CROSS or kind is PairKind.REAL_OTHER:
        if len(dataset.identity_index) < 2:
            raise InsufficientDiversityError(
                kind, f"{kind.value} needs at least 2 identities"
            )
        i = int(rng.integers(n))
        left_ident = dataset.records[i].identity_id
        others = [ident for ident in dataset.identities if ident != left_ident]
        other_ident = others[int(rng.integers(len(others)))]
        choices = dataset.identity_index[other_ident]
        j = choices[int(rng.integers(len(choices)))]
        left = dataset.hr_image(i)
        if kind is PairKind.SR_CROSS:
            right = dataset.hr_lr(j)[1]
        else:
            right = dataset.hr_image(j)
        return FacePair(kind, left, right, left_ident, other_ident, i, j)

    if kind is PairKind.REAL_SAME:
        rich = [ident for ident, idx in sorted(dataset.identity_index.items()) if len(idx) >= 2]
        if not rich:
            raise InsufficientDiversityError(
                kind, f"{kind.value} needs an identity with at least 2 images"
            )
        ident = rich[int(rng.integers(len(rich)))]
        idx = dataset.identity_index[ident]
        a, b = rng.choice(len(idx), size=2, replace=False)
        i, j = idx[int(a)], idx[int(b)]
        return FacePair(kind, dataset.hr_image(i), dataset.hr_image(j), ident, ident, i, j)

    raise ValueError(f"unknown pair kind: {kind!r}")


@dataclass
class PairGroup:
    """All sampled pairs of one kind, stacked for the discriminator.

    Scale lists run small to large and match the generator's branch sizes
    (2x LR up to HR). Arrays are in the network range [-1, 1]. For SR kinds
    ``right_scales`` keeps whatever array type ``generator_fn`` produced
    (e.g. torch tensors carrying gradients); real sides are numpy.
    ``right_reference`` holds the [0, 1] HR ground truth of the SR source.
    """

    kind: PairKind
    target: PairClass
    left_identity: np.ndarray
    right_identity: np.ndarray
    left_scales: list
    right_scales: list
    right_reference: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.left_identity)


@dataclass
class PairBatch:
    """One assembled training batch.

    ``generated`` is the generator's multi-scale output on the stacked LR
    inputs of the SR kinds (SR_SELF rows first, then SR_CROSS), aligned with
    ``sr_reference``; both are None when the mix contains no SR pairs.
    """

    pairs: list
    groups: dict
    generated: list | None = None
    sr_reference: np.ndarray | None = None

    def labels(self) -> list:
        return [p.target_class for p in self.pairs]


def _scale_sizes(hr_size: int, scale_factor: int) -> list:
    lr = hr_size // scale_factor
    sizes = []
    s = lr * 2
    while s <= hr_size:
        sizes.append(s)
        s *= 2
    return sizes


def _pyramid(hr_batch01: np.ndarray, sizes: Sequence[int]) -> list:
    """[-1, 1] copies of real HR images at every discriminator scale."""
    hr = hr_batch01.shape[-1]
    return [
        unit_to_signed(box_downsample(hr_batch01, hr // s)).astype(np.float32)
        for s in sizes
    ]


def make_batch(
    dataset: DatasetHandle,
    generator_fn: Callable | None,
    batch_size: int,
    mix: Sequence[int],
    rng: np.random.Generator,
) -> PairBatch:
    """Sample pairs per the 4-entry mix and realize the SR sides.

    ``mix`` counts follow :data:`PAIR_ORDER`. ``generator_fn`` maps an LR
    batch in [-1, 1] to a small-to-large list of outputs in [-1, 1]; it is
    invoked exactly once, and only when the mix contains SR pairs.
    """
    mix = list(mix)
    if len(mix) != 4 or any(m < 0 for m in mix):
        raise ValueError(f"mix must be 4 nonnegative counts, got {mix}")
    if sum(mix) != batch_size:
        raise ValueError(f"mix {mix} does not sum to batch_size {batch_size}")

    pairs: list[FacePair] = []
    by_kind: dict[PairKind, list] = {k: [] for k in PAIR_ORDER}
    for kind, count in zip(PAIR_ORDER, mix):
        for _ in range(count):
            p = sample_pair(dataset, kind, rng)
            pairs.append(p)
            by_kind[kind].append(p)

    sizes = _scale_sizes(dataset.hr_size, dataset.scale_factor)

    # One generator invocation on all SR sources (SR_SELF rows, then SR_CROSS).
    sr_pairs = by_kind[PairKind.SR_SELF] + by_kind[PairKind.SR_CROSS]
    generated = None
    sr_reference = None
    if sr_pairs:
        if generator_fn is None:
            raise ValueError("mix contains SR pairs but generator_fn is None")
        lr = np.stack([p.right_source for p in sr_pairs]).astype(np.float32)
        outputs = generator_fn(unit_to_signed(lr).astype(np.float32))
        generated = list(outputs.images) if hasattr(outputs, "images") else list(outputs)
        if len(generated) != len(sizes):
            raise ShapeError(
                f"generator produced {len(generated)} scales, expected {len(sizes)}"
            )
        sr_reference = np.stack(
            [dataset.hr_image(p.right_index) for p in sr_pairs]
        ).astype(np.float32)

    groups: dict[PairKind, PairGroup] = {}
    offset = 0
    for kind in PAIR_ORDER:
        kind_pairs = by_kind[kind]
        if not kind_pairs:
            continue
        left01 = np.stack([p.left for p in kind_pairs]).astype(np.float32)
        left_scales = _pyramid(left01, sizes)
        if kind in (PairKind.SR_SELF, PairKind.SR_CROSS):
            k = len(kind_pairs)
            right_scales = [g[offset : offset + k] for g in generated]
            right_reference = sr_reference[offset : offset + k]
            offset += k
        else:
            right01 = np.stack([p.right_source for p in kind_pairs]).astype(np.float32)
            right_scales = _pyramid(right01, sizes)
            right_reference = None
        groups[kind] = PairGroup(
            kind=kind,
            target=PAIR_TARGET[kind],
            left_identity=np.array([p.left_identity for p in kind_pairs]),
            right_identity=np.array([p.right_identity for p in kind_pairs]),
            left_scales=left_scales,
            right_scales=right_scales,
            right_reference=right_reference,
        )

    return PairBatch(pairs=pairs, groups=groups, generated=generated, sr_reference=sr_reference)
