"""Image loading, preprocessing and RGBA PNG encoding.

Everything outside this module works on float64 rasters normalized to [0, 1]:

* a luminance grid (``PixelGrid``) is a 2-D array of shape ``(height, width)``;
* an RGB raster is a 3-D array of shape ``(height, width, 3)``;
* an alpha layer has the same shape as a luminance grid.

Quantization to 8 bits happens only when a file is written.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ImageFormatError

PathLike = Union[str, os.PathLike]

DEFAULT_SIZE = (150, 150)

# ITU-R BT.601 luma weights.
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def check_grid(grid: np.ndarray, name: str = "grid") -> np.ndarray:
    arr = np.asarray(grid, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    return arr


def same_shape(*grids: np.ndarray) -> None:
    """Raise ``ValueError`` unless all grids share one height/width."""
    shapes = {np.shape(g)[:2] for g in grids}
    if len(shapes) != 1:
        raise ValueError(f"dimension mismatch: {sorted(shapes)}")


def quantize(values: np.ndarray) -> np.ndarray:
    """Map [0, 1] samples onto the 8-bit grid, returning normalized values."""
    return to_bytes(values) / 255.0


def to_bytes(values: np.ndarray) -> np.ndarray:
    # round half away from zero; samples are non-negative after clipping
    scaled = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0) * 255.0
    return np.floor(scaled + 0.5).astype(np.uint8)


def parse_size(text: str) -> Tuple[int, int]:
    """Parse a ``WxH`` size string."""
    try:
        w, h = text.lower().split("x")
        size = (int(w), int(h))
    except ValueError:
        raise ValueError(f"size must look like WxH, got {text!r}") from None
    if min(size) < 1:
        raise ValueError(f"size dimensions must be >= 1, got {text!r}")
    return size


def _open(path: PathLike) -> Image.Image:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image file: {path}")
    try:
        img = Image.open(path)
        img.load()
    except UnidentifiedImageError as exc:
        raise ImageFormatError(f"cannot decode image {path}") from exc
    return img


def luminance(img: Image.Image) -> np.ndarray:
    """Real-valued BT.601 luminance of a PIL image, in [0, 1]."""
    if img.mode == "L":
        return np.asarray(img, dtype=np.float64) / 255.0
    rgb = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    return np.clip(rgb @ LUMA_WEIGHTS, 0.0, 1.0)


def load_grayscale(path: PathLike, size: Tuple[int, int] | None = DEFAULT_SIZE) -> np.ndarray:
    """Read an image as luminance and resize it to ``size`` (width, height).

    ``size=None`` keeps the native dimensions. Resampling is bilinear on the
    real-valued luminance, clamped back into [0, 1].
    """
    if size is not None:
        size = (int(size[0]), int(size[1]))
        if min(size) < 1:
            raise ValueError(f"size dimensions must be >= 1, got {size}")
    gray = luminance(_open(path))
    if size is None or (gray.shape[1], gray.shape[0]) == size:
        return gray
    resized = Image.fromarray(gray.astype(np.float32)).resize(size, Image.BILINEAR)
    return np.clip(np.asarray(resized, dtype=np.float64), 0.0, 1.0)


def gray_to_rgb(gray: np.ndarray) -> np.ndarray:
    gray = check_grid(gray, "gray")
    return np.repeat(gray[:, :, None], 3, axis=2)


def rgb_luminance(rgb: np.ndarray) -> np.ndarray:
    """Collapse an RGB raster to one channel.

    Grayscale-origin rasters (R == G == B) return the shared channel unchanged,
    so replication followed by this call is an exact identity.
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    if np.array_equal(r, g) and np.array_equal(g, b):
        return r.copy()
    return np.clip(rgb @ LUMA_WEIGHTS, 0.0, 1.0)


def encode_attack_png(rgb: np.ndarray, alpha: np.ndarray, path: PathLike) -> None:
    """Write ``rgb`` plus ``alpha`` as an 8-bit RGBA PNG (color type 6)."""
    rgb = np.asarray(rgb, dtype=np.float64)
    alpha = check_grid(alpha, "alpha")
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"rgb must have shape (H, W, 3), got {rgb.shape}")
    same_shape(rgb, alpha)
    samples = np.concatenate([to_bytes(rgb), to_bytes(alpha)[:, :, None]], axis=2)
    Image.fromarray(samples).save(path, format="PNG")


def decode_attack_png(path: PathLike) -> Tuple[np.ndarray, np.ndarray]:
    """Read an RGBA PNG back into normalized ``(rgb, alpha)`` rasters."""
    img = _open(path)
    if img.format != "PNG":
        raise ImageFormatError(f"{path} is {img.format}, not PNG")
    if img.mode == "LA":
        img = img.convert("RGBA")
    if img.mode != "RGBA":
        raise ImageFormatError(f"{path} has no alpha channel (mode {img.mode})")
    samples = np.asarray(img, dtype=np.float64) / 255.0
    return samples[:, :, :3].copy(), samples[:, :, 3].copy()


def has_alpha(path: PathLike) -> bool:
    img = _open(path)
    return img.mode in ("RGBA", "LA", "PA") or "transparency" in img.info


def save_grayscale_png(gray: np.ndarray, path: PathLike) -> None:
    gray = check_grid(gray, "gray")
    Image.fromarray(to_bytes(gray)).save(path, format="PNG")
