"""Array conventions and PNG I/O.

Images are ``H x W x 3`` float arrays in ``[0, 1]``; latents are
``h x w x C`` float arrays. Both are plain numpy arrays.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def check_image(image: np.ndarray, name: str = "image") -> np.ndarray:
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"{name} must be HxWx3, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or inf")
    return arr


def check_latent(latent: np.ndarray, name: str = "latent") -> np.ndarray:
    arr = np.asarray(latent)
    if arr.ndim != 3:
        raise ValueError(f"{name} must be h x w x C, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or inf")
    return arr


def to_gray(image: np.ndarray) -> np.ndarray:
    """ITU-R BT.601 luma, same range as the input."""
    image = np.asarray(image, dtype=np.float64)
    return image[..., 0] * 0.299 + image[..., 1] * 0.587 + image[..., 2] * 0.114


def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.clip(np.round(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def save_png(path: str | Path, image: np.ndarray) -> Path:
    """Write an ``H x W x 3`` image or ``H x W`` map in ``[0, 1]`` as 8-bit PNG."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(image)).save(path, format="PNG")
    return path


def load_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
