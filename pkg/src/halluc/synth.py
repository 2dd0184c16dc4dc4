"""Procedural synthetic face corpus.

Each identity is a deterministic set of drawing parameters (face geometry,
eye spacing and size, nose and mouth shape, skin/hair/backdrop colors)
derived from an integer seed. A variation seed perturbs pose-like factors
only: translation up to 5% of the image side, brightness within +/-10%,
and mild Gaussian smoothing. Identity parameters are never touched by the
variation, so the within-identity pixel spread stays well below the
between-identity spread.
"""

from __future__ import annotations

import numpy as np
from PIL import Image, ImageDraw
from scipy.ndimage import gaussian_filter

from .errors import ShapeError
from .images import box_downsample, clip01

MIN_SIZE = 16
_SUPERSAMPLE = 4  # draw at 4x and box-average down for antialiasing


def _rng(*entropy: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(entropy)))


def face_parameters(identity_seed: int) -> dict:
    """Identity-bearing drawing parameters, in image-relative [0, 1] units."""
    rng = _rng(identity_seed, 0x1D)
    u = rng.uniform

    skin = np.array([u(0.45, 0.95), u(0.35, 0.80), u(0.25, 0.70)])
    return {
        "backdrop": np.array([u(0.05, 0.60), u(0.05, 0.60), u(0.05, 0.60)]),
        "hair": np.array([u(0.02, 0.90), u(0.02, 0.70), u(0.02, 0.60)]),
        "skin": skin,
        "face_rx": u(0.26, 0.36),
        "face_ry": u(0.32, 0.44),
        "eye_y": u(0.40, 0.46),
        "eye_spacing": u(0.10, 0.17),
        "eye_radius": u(0.035, 0.060),
        "iris": np.array([u(0.05, 0.55), u(0.15, 0.65), u(0.25, 0.80)]),
        "iris_ratio": u(0.40, 0.60),
        "brow_offset": u(0.055, 0.095),
        "brow_halfwidth": u(0.05, 0.09),
        "brow_thickness": u(0.008, 0.020),
        "nose_length": u(0.08, 0.16),
        "nose_width": u(0.020, 0.050),
        "mouth_y": u(0.64, 0.72),
        "mouth_halfwidth": u(0.08, 0.16),
        "mouth_halfheight": u(0.015, 0.045),
        "mouth_color": np.array([u(0.45, 0.85), u(0.05, 0.30), u(0.05, 0.30)]),
    }


def variation_parameters(identity_seed: int, variation_seed: int) -> dict:
    """Pose-like perturbations; bounded so identity stays recognizable."""
    rng = _rng(identity_seed, variation_seed, 0x7A)
    return {
        "dx": rng.uniform(-0.05, 0.05),
        "dy": rng.uniform(-0.05, 0.05),
        "brightness": rng.uniform(0.90, 1.10),
        "blur_sigma": rng.uniform(0.2, 0.8),
    }


def _color(vec) -> tuple:
    return tuple(int(round(255 * float(c))) for c in vec)


def _ellipse(draw, cx, cy, rx, ry, scale, fill):
    draw.ellipse(
        [(cx - rx) * scale, (cy - ry) * scale, (cx + rx) * scale, (cy + ry) * scale],
        fill=fill,
    )


def synth_face(identity_seed: int, variation_seed: int, size: int) -> np.ndarray:
    """Render one synthetic face as a float32 ``(3, size, size)`` array in [0, 1].

    Deterministic: equal seed pairs give bit-identical images.
    """
    if size < MIN_SIZE:
        raise ShapeError(f"synthetic face size must be >= {MIN_SIZE}, got {size}")

    ident = face_parameters(identity_seed)
    var = variation_parameters(identity_seed, variation_seed)

    s = size * _SUPERSAMPLE
    im = Image.new("RGB", (s, s), _color(ident["backdrop"]))
    draw = ImageDraw.Draw(im)

    cx = 0.5 + var["dx"]
    cy = 0.52 + var["dy"]
    rx, ry = ident["face_rx"], ident["face_ry"]

    # Hair: a larger ellipse behind the upper half of the face.
    _ellipse(draw, cx, cy - 0.30 * ry, rx * 1.18, ry * 0.95, s, _color(ident["hair"]))
    _ellipse(draw, cx, cy, rx, ry, s, _color(ident["skin"]))

    eye_y = cy - 0.52 + ident["eye_y"]
    er = ident["eye_radius"]
    for side in (-1.0, 1.0):
        ex = cx + side * ident["eye_spacing"]
        _ellipse(draw, ex, eye_y, er, er * 0.75, s, (250, 250, 250))
        _ellipse(draw, ex, eye_y, er * ident["iris_ratio"], er * ident["iris_ratio"], s,
                 _color(ident["iris"]))
        _ellipse(draw, ex, eye_y, er * ident["iris_ratio"] * 0.45,
                 er * ident["iris_ratio"] * 0.45, s, (10, 10, 10))
        bw, bt = ident["brow_halfwidth"], ident["brow_thickness"]
        by = eye_y - ident["brow_offset"]
        draw.rectangle(
            [(ex - bw) * s, (by - bt) * s, (ex + bw) * s, (by + bt) * s],
            fill=_color(ident["hair"] * 0.6),
        )

    nose_top = eye_y + 0.04
    _ellipse(draw, cx, nose_top + ident["nose_length"] / 2,
             ident["nose_width"], ident["nose_length"] / 2, s,
             _color(ident["skin"] * 0.78))

    _ellipse(draw, cx, cy - 0.52 + ident["mouth_y"],
             ident["mouth_halfwidth"], ident["mouth_halfheight"], s,
             _color(ident["mouth_color"]))

    hi = np.asarray(im, dtype=np.float64).transpose(2, 0, 1) / 255.0
    img = box_downsample(hi, _SUPERSAMPLE)
    img = gaussian_filter(img, sigma=(0.0, var["blur_sigma"], var["blur_sigma"]), mode="nearest")
    img = clip01(img * var["brightness"])
    return img.astype(np.float32)
