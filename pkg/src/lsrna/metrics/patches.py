"""Seeded, method-independent patch locations and reference preparation."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..images import check_image
from ..resample import resize


@dataclass(frozen=True)
class PatchProtocol:
    patch_size: int = 64
    num_patches: int = 2000
    seed: int = 0
    resize_filter: str = "lanczos"

    def __post_init__(self):
        if self.patch_size < 1 or self.num_patches < 1:
            raise ValueError("patch_size and num_patches must be >= 1")
        if self.resize_filter != "lanczos":
            raise ValueError("the patch protocol prepares references with the Lanczos filter")


def prepare_reference_image(gt: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    """Centre-crop ``gt`` to the target aspect ratio, then Lanczos-resize to the target size."""
    gt = check_image(gt, "reference")
    h, w = gt.shape[:2]
    if h < target_h or w < target_w:
        raise ValueError(f"reference {h}x{w} is smaller than target {target_h}x{target_w}")
    # compare h/w with target_h/target_w in integers
    if h * target_w > w * target_h:
        ch, cw = (w * target_h) // target_w, w
    else:
        ch, cw = h, (h * target_w) // target_h
    top, left = (h - ch) // 2, (w - cw) // 2
    crop = gt[top:top + ch, left:left + cw]
    return np.clip(resize(crop, target_h, target_w, "lanczos"), 0.0, 1.0)


def patch_coordinates(n_images: int, height: int, width: int, protocol: PatchProtocol) -> np.ndarray:
    """``(num_patches, 3)`` rows of ``(image_index, top, left)``.

    Depends only on the image count, the image size and the protocol.
    """
    p = protocol.patch_size
    if height < p or width < p:
        raise ValueError(f"images {height}x{width} are smaller than patch size {p}")
    if n_images < 1:
        raise ValueError("no images")
    rng = np.random.default_rng(protocol.seed)
    ys = rng.integers(0, height - p + 1, protocol.num_patches)
    xs = rng.integers(0, width - p + 1, protocol.num_patches)
    idx = np.arange(protocol.num_patches) % n_images
    return np.stack([idx, ys, xs], axis=1)


def extract_aligned_patches(images: Sequence[np.ndarray], protocol: PatchProtocol,
                            coords: np.ndarray | None = None) -> tuple[list[np.ndarray], np.ndarray]:
    if len(images) == 0:
        raise ValueError("no images")
    shapes = {im.shape[:2] for im in images}
    if len(shapes) != 1:
        raise ValueError(f"images in one set must share a size, got {sorted(shapes)}")
    h, w = shapes.pop()
    if coords is None:
        coords = patch_coordinates(len(images), h, w, protocol)
    p = protocol.patch_size
    patches = [images[i][y:y + p, x:x + p] for i, y, x in coords]
    return patches, coords


def dump_coordinates(path: str | Path, coords: np.ndarray) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["image_index", "top", "left"])
        wr.writerows(coords.tolist())
    return path
