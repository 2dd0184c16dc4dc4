"""Image array conventions and pixel-level operations.

Images are dense float arrays in channel-first layout: ``(3, H, W)`` for a
single image, ``(N, 3, H, W)`` for a batch. Two value ranges are in play:
``[0, 1]`` for storage, file I/O and metrics, ``[-1, 1]`` at network
boundaries. Conversions and clamps are always explicit.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import RangeError, ShapeError

UNIT_RANGE = (0.0, 1.0)
SIGNED_RANGE = (-1.0, 1.0)

# Rec. 601 luma weights, used by SSIM/FSIM and the pixel embedder.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

_RANGE_TOL = 1e-5


def check_image(x, value_range=UNIT_RANGE, name="image"):
    """Validate a single ``(3, H, W)`` image; returns it unchanged."""
    x = np.asarray(x)
    if x.ndim != 3 or x.shape[0] != 3:
        raise ShapeError(f"{name}: expected shape (3, H, W), got {x.shape}")
    _check_common(x, value_range, name)
    return x


def check_image_batch(x, value_range=UNIT_RANGE, name="images"):
    """Validate a ``(N, 3, H, W)`` batch; returns it unchanged."""
    x = np.asarray(x)
    if x.ndim != 4 or x.shape[1] != 3:
        raise ShapeError(f"{name}: expected shape (N, 3, H, W), got {x.shape}")
    _check_common(x, value_range, name)
    return x


def _check_common(x, value_range, name):
    if x.shape[-2] < 1 or x.shape[-1] < 1:
        raise ShapeError(f"{name}: degenerate spatial size {x.shape[-2:]}")
    if not np.issubdtype(x.dtype, np.floating):
        raise ShapeError(f"{name}: expected a float dtype, got {x.dtype}")
    if not np.all(np.isfinite(x)):
        raise RangeError(f"{name}: contains non-finite values")
    lo, hi = value_range
    xmin, xmax = float(x.min()), float(x.max())
    if xmin < lo - _RANGE_TOL or xmax > hi + _RANGE_TOL:
        raise RangeError(
            f"{name}: values [{xmin:.6g}, {xmax:.6g}] outside declared range [{lo}, {hi}]"
        )


def unit_to_signed(x):
    """Map [0, 1] storage range to [-1, 1] network range."""
    return np.asarray(x) * 2.0 - 1.0


def signed_to_unit(x):
    """Map [-1, 1] network range back to [0, 1] storage range."""
    return (np.asarray(x) + 1.0) / 2.0


def clip01(x):
    """Explicit clamp to [0, 1]."""
    return np.clip(x, 0.0, 1.0)


def load_image(path) -> np.ndarray:
    """Decode an 8-bit RGB raster file to a float32 ``(3, H, W)`` array in [0, 1]."""
    with Image.open(path) as im:
        rgb = np.asarray(im.convert("RGB"), dtype=np.float32)
    return np.ascontiguousarray(rgb.transpose(2, 0, 1)) / 255.0


def save_image(img, path) -> Path:
    """Write a [0, 1] image as an 8-bit RGB PNG. Returns the written path."""
    img = check_image(img, UNIT_RANGE, "image")
    path = Path(path)
    data = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(data.transpose(1, 2, 0), mode="RGB").save(path, format="PNG")
    return path


def center_crop(img, size: int) -> np.ndarray:
    """Centered ``size x size`` crop of a ``(..., H, W)`` array."""
    h, w = img.shape[-2], img.shape[-1]
    if h < size or w < size:
        raise ShapeError(f"source {h}x{w} smaller than requested crop {size}x{size}")
    top = (h - size) // 2
    left = (w - size) // 2
    return img[..., top : top + size, left : left + size]


def box_downsample(x, factor: int) -> np.ndarray:
    """Downsample ``(..., H, W)`` by an integer factor with exact block averaging.

    Output pixel (u, v) is the mean of the ``factor x factor`` input block at
    rows [u*f, (u+1)*f), cols [v*f, (v+1)*f), accumulated in double precision
    and then cast back to the input dtype. This is the antialiased
    area-weighted bilinear kernel for integer factors, and it is bit
    reproducible.
    """
    x = np.asarray(x)
    if factor < 1:
        raise ShapeError(f"downsample factor must be >= 1, got {factor}")
    h, w = x.shape[-2], x.shape[-1]
    if h % factor or w % factor:
        raise ShapeError(f"spatial size {h}x{w} not divisible by factor {factor}")
    if factor == 1:
        return x.copy()
    lead = x.shape[:-2]
    blocks = x.astype(np.float64).reshape(*lead, h // factor, factor, w // factor, factor)
    out = blocks.mean(axis=(-3, -1))
    return out.astype(x.dtype, copy=False)


def bicubic_upsample(x, factor: int) -> np.ndarray:
    """Bicubic upsample of a [0, 1] ``(..., 3, H, W)`` array, clamped back to [0, 1].

    Interpolation baseline only; the trained generator does not use it.
    """
    import torch
    import torch.nn.functional as F

    x = np.asarray(x)
    squeeze = x.ndim == 3
    if squeeze:
        x = x[None]
    t = torch.from_numpy(np.ascontiguousarray(x, dtype=np.float64))
    up = F.interpolate(t, scale_factor=factor, mode="bicubic", align_corners=False)
    out = np.clip(up.numpy(), 0.0, 1.0).astype(x.dtype, copy=False)
    return out[0] if squeeze else out


def luminance(img) -> np.ndarray:
    """Rec. 601 luminance of a ``(..., 3, H, W)`` array; returns ``(..., H, W)``."""
    img = np.asarray(img)
    if img.shape[-3] != 3:
        raise ShapeError(f"expected 3 channels, got shape {img.shape}")
    r, g, b = img[..., 0, :, :], img[..., 1, :, :], img[..., 2, :, :]
    return LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b
