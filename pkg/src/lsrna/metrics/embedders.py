"""Image -> feature-vector maps used by the distribution metrics.

``RandomProjectionEmbedder`` is a fixed-seed two-stage random convolution
network with rectification and pooling, followed by a random linear
projection. It has no trained weights, so its numbers are only comparable
with themselves, but it is deterministic and sensitive to both colour
layout and fine texture.

``FeatureFileEmbedder`` looks precomputed features up by image content,
for plugging in a pretrained network run elsewhere.
"""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
import torch
from torch.nn import functional as F

from ..archive import load_archive, save_archive
from ..images import to_uint8
from ..resample import resize


class FeatureEmbedder(Protocol):
    backend: str
    feature_dim: int

    def embed(self, images: Sequence[np.ndarray]) -> np.ndarray: ...

    def descriptor(self) -> dict: ...


class RandomProjectionEmbedder:
    backend = "fixed-random-projection"

    def __init__(self, feature_dim: int = 64, input_size: int = 64, n_filters: int = 32,
                 seed: int = 0, batch: int = 64):
        self.feature_dim = feature_dim
        self.input_size = input_size
        self.n_filters = n_filters
        self.seed = seed
        self.batch = batch
        g = torch.Generator().manual_seed(seed)
        w1 = torch.randn(n_filters, 3, 5, 5, generator=g)
        # zero-mean filters respond to structure, not to flat colour
        self.w1 = (w1 - w1.mean(dim=(1, 2, 3), keepdim=True)) / 5.0
        self.w2 = torch.randn(n_filters, n_filters, 3, 3, generator=g) / (3.0 * n_filters ** 0.5)
        raw_dim = 3 * 16 + n_filters * 16 + n_filters
        self.proj = torch.randn(raw_dim, feature_dim, generator=g, dtype=torch.float64) / raw_dim ** 0.5

    def descriptor(self) -> dict:
        return {"backend": self.backend, "feature_dim": self.feature_dim, "input_size": self.input_size,
                "n_filters": self.n_filters, "seed": self.seed}

    def _prepare(self, image: np.ndarray) -> np.ndarray:
        s = self.input_size
        if image.shape[:2] != (s, s):
            image = resize(image, s, s, "bilinear")
        return np.asarray(image, dtype=np.float32)

    @torch.no_grad()
    def _raw(self, x: torch.Tensor) -> torch.Tensor:
        colour = F.adaptive_avg_pool2d(x, 4).flatten(1)
        h1 = F.relu(F.conv2d(F.pad(x, (2, 2, 2, 2), mode="reflect"), self.w1))
        local = F.adaptive_avg_pool2d(h1, 4).flatten(1).sqrt()
        h2 = F.relu(F.conv2d(h1, self.w2, stride=2, padding=1))
        deep = h2.mean(dim=(2, 3)).sqrt()
        return torch.cat([colour, local, deep], dim=1)

    def embed(self, images: Sequence[np.ndarray]) -> np.ndarray:
        if len(images) == 0:
            raise ValueError("nothing to embed")
        out = []
        for start in range(0, len(images), self.batch):
            blk = np.stack([self._prepare(im) for im in images[start:start + self.batch]])
            x = torch.from_numpy(blk).permute(0, 3, 1, 2).contiguous()
            out.append(self._raw(x).double() @ self.proj)
        return torch.cat(out).numpy()


def image_key(image: np.ndarray) -> str:
    q = to_uint8(image)
    return hashlib.sha256(repr(q.shape).encode() + q.tobytes()).hexdigest()


class FeatureFileEmbedder:
    """Features stored in a tensor archive, keyed by ``image_key`` of the 8-bit image."""

    backend = "external-feature-files"

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.table, self.meta = load_archive(self.path)
        if not self.table:
            raise ValueError(f"feature file {path} is empty")
        dims = {v.shape for v in self.table.values()}
        if len(dims) != 1 or len(next(iter(dims))) != 1:
            raise ValueError("feature file entries must be equal-length vectors")
        self.feature_dim = next(iter(dims))[0]

    def descriptor(self) -> dict:
        return {"backend": self.backend, "feature_dim": self.feature_dim, "path": str(self.path)}

    def embed(self, images: Sequence[np.ndarray]) -> np.ndarray:
        rows = []
        for im in images:
            key = image_key(im)
            if key not in self.table:
                raise KeyError(f"no precomputed features for image {key[:12]}")
            rows.append(self.table[key])
        return np.stack(rows).astype(np.float64)


def write_feature_file(path: str | Path, images: Sequence[np.ndarray], features: np.ndarray,
                       meta: dict | None = None) -> Path:
    features = np.asarray(features)
    if features.shape[0] != len(images):
        raise ValueError("one feature row per image is required")
    return save_archive(path, {image_key(im): f for im, f in zip(images, features)}, meta or {})
