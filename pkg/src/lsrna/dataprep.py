"""LR/HR latent pair construction for LSR training.

HR crops are tiled out of source images, bicubic-downscaled by each factor
in RGB, and both resolutions are encoded separately. LR latents are never
produced by resampling HR latents; each record carries a provenance tag
saying so.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .archive import load_archive, save_archive
from .codec import Codec
from .images import check_image
from .resample import resize
from .seeding import RngLike, as_rng, derive_seed

log = logging.getLogger(__name__)

PROVENANCE = "independent-encode"


@dataclass(frozen=True)
class DataprepConfig:
    crop_min: int = 1056
    crop_max: int = 1440
    crop_quantum: int = 96
    factors: tuple[int, ...] = (2, 3, 4)
    min_source_resolution: int = 1440
    s: int = 8
    max_crops_per_image: int | None = None
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if not self.factors or min(self.factors) < 1:
            raise ValueError("factors must be a non-empty set of positive integers")
        if self.crop_min > self.crop_max:
            raise ValueError("crop_min > crop_max")
        if self.crop_min % self.crop_quantum or self.crop_max % self.crop_quantum:
            raise ValueError("crop range endpoints must be multiples of crop_quantum")
        need = math.lcm(*self.factors) * self.s
        if self.crop_quantum % need:
            raise ValueError(f"crop_quantum {self.crop_quantum} must be divisible by lcm(factors)*s = {need}")

    @property
    def crop_sizes(self) -> list[int]:
        return list(range(self.crop_min, self.crop_max + 1, self.crop_quantum))


DESK_DATAPREP = DataprepConfig(crop_min=96, crop_max=192, crop_quantum=48, factors=(2, 3, 4),
                               min_source_resolution=192, s=4)


@dataclass
class Crop:
    image: np.ndarray
    box: tuple[int, int, int, int]  # (top, left, height, width) in source pixels


@dataclass
class PairRecord:
    lr_latent: np.ndarray
    hr_latent: np.ndarray
    scale_factor: int
    source_id: str
    crop_box: tuple[int, int, int, int]
    provenance: str = PROVENANCE

    def __post_init__(self):
        lh, lw = self.lr_latent.shape[:2]
        if self.hr_latent.shape[:2] != (lh * self.scale_factor, lw * self.scale_factor):
            raise ValueError(f"HR {self.hr_latent.shape[:2]} != LR {(lh, lw)} x {self.scale_factor}")


@dataclass
class PairDataset:
    records: list[PairRecord]
    manifest: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def channels(self) -> int:
        return self.records[0].lr_latent.shape[2]

    def factor_counts(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for r in self.records:
            out[r.scale_factor] = out.get(r.scale_factor, 0) + 1
        return out

    def source_ids(self) -> set[str]:
        return {r.source_id for r in self.records}


def harvest_crops(image: np.ndarray, config: DataprepConfig, rng: RngLike) -> list[Crop]:
    """Tile the image with non-overlapping crops of one randomly chosen size."""
    image = check_image(image)
    h, w = image.shape[:2]
    if min(h, w) < config.min_source_resolution:
        log.warning("source %dx%d below min resolution %d; skipped", h, w, config.min_source_resolution)
        return []
    rng = as_rng(rng)
    size = int(rng.choice(config.crop_sizes))
    if size > min(h, w):
        log.warning("crop size %d exceeds source %dx%d; skipped", size, h, w)
        return []
    crops = [Crop(image[y:y + size, x:x + size], (y, x, size, size))
             for y in range(0, h - size + 1, size) for x in range(0, w - size + 1, size)]
    if config.max_crops_per_image is not None:
        crops = crops[:config.max_crops_per_image]
    return crops


def degrade_bicubic(crop: np.ndarray, factor: int) -> np.ndarray:
    crop = check_image(crop)
    h, w = crop.shape[:2]
    if factor < 1 or h % factor or w % factor:
        raise ValueError(f"crop {h}x{w} not divisible by factor {factor}")
    if factor == 1:
        return crop.copy()
    return np.clip(resize(crop, h // factor, w // factor, "bicubic"), 0.0, 1.0)


def tiling_count(h: int, w: int, size: int) -> int:
    return (h // size) * (w // size)


def build_pair_dataset(sources: Iterable[tuple[str, np.ndarray]], codec: Codec,
                       config: DataprepConfig, rng: RngLike = None) -> PairDataset:
    """One record per (crop, factor); per-source seeds derive from ``config.rng_seed``."""
    if codec.s != config.s:
        raise ValueError(f"codec s={codec.s} does not match dataprep s={config.s}")
    records: list[PairRecord] = []
    entries = []
    for source_id, image in sources:
        seed = derive_seed(config.rng_seed, "crops", source_id)
        crops = harvest_crops(image, config, seed)
        entries.append({"source_id": source_id, "seed": seed,
                        "crop_size": crops[0].box[2] if crops else None, "n_crops": len(crops),
                        "height": int(image.shape[0]), "width": int(image.shape[1])})
        for crop in crops:
            hr_latent = codec.encode(crop.image).astype(np.float32)
            if hr_latent.shape[2] != codec.channels:
                raise ValueError("codec produced an unexpected channel count")
            for f in config.factors:
                lr_latent = codec.encode(degrade_bicubic(crop.image, f)).astype(np.float32)
                records.append(PairRecord(lr_latent, hr_latent, f, source_id, crop.box))
    manifest = {"config": asdict(config), "sources": entries, "count": len(records),
                "codec": {"s": codec.s, "channels": codec.channels}}
    return PairDataset(records, manifest)


def save_pair_dataset(dataset: PairDataset, directory: str | Path) -> Path:
    """Shard per source image plus a JSON manifest of every record."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    by_source: dict[str, list[tuple[int, PairRecord]]] = {}
    for i, r in enumerate(dataset.records):
        by_source.setdefault(r.source_id, []).append((i, r))
    rows = []
    for k, (sid, items) in enumerate(sorted(by_source.items())):
        shard = f"shard_{k:05d}.lsta"
        tensors = {}
        for j, (i, r) in enumerate(items):
            tensors[f"{j}/lr"] = r.lr_latent
            tensors[f"{j}/hr"] = r.hr_latent
            rows.append({"source_id": sid, "crop_box": list(r.crop_box), "factor": r.scale_factor,
                         "shard": shard, "entry": j, "provenance": r.provenance})
        save_archive(directory / shard, tensors, {"kind": "pairs", "source_id": sid})
    manifest = dict(dataset.manifest, records=rows)
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return path


def load_pair_dataset(directory: str | Path) -> PairDataset:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    cache: dict[str, dict] = {}
    records = []
    for row in manifest["records"]:
        if row["shard"] not in cache:
            cache[row["shard"]], _ = load_archive(directory / row["shard"])
        t = cache[row["shard"]]
        records.append(PairRecord(t[f"{row['entry']}/lr"], t[f"{row['entry']}/hr"], row["factor"],
                                  row["source_id"], tuple(row["crop_box"]), row["provenance"]))
    return PairDataset(records, {k: v for k, v in manifest.items() if k != "records"})


def sample_training_batch(dataset: PairDataset, batch_size: int, rng: RngLike,
                          lr_crop: int = 32, hr_samples: int | None = None) -> dict:
    """Random LR latent crops with sampled HR targets inside the matching region.

    Returns arrays ``lr`` (B, L, L, C), ``coord`` and ``cell`` (B, S, 2) and
    ``target`` (B, S, C). Coordinates are relative to the crop, so ``[-1, 1]``
    spans exactly the LR crop. No flips or rotations are applied.
    """
    rng = as_rng(rng)
    hr_samples = (2 * lr_crop) ** 2 if hr_samples is None else hr_samples
    eligible = [i for i, r in enumerate(dataset.records)
                if min(r.lr_latent.shape[:2]) >= lr_crop and (lr_crop * r.scale_factor) ** 2 >= hr_samples]
    if not eligible:
        raise ValueError(f"no record can supply a {lr_crop}x{lr_crop} LR crop with {hr_samples} HR samples")
    c = dataset.channels
    lr = np.empty((batch_size, lr_crop, lr_crop, c), dtype=np.float32)
    coord = np.empty((batch_size, hr_samples, 2), dtype=np.float32)
    cell = np.empty((batch_size, hr_samples, 2), dtype=np.float32)
    target = np.empty((batch_size, hr_samples, c), dtype=np.float32)
    picks, boxes, hr_boxes = [], [], []
    for b in range(batch_size):
        i = int(eligible[rng.integers(len(eligible))])
        rec = dataset.records[i]
        f = rec.scale_factor
        y0 = int(rng.integers(rec.lr_latent.shape[0] - lr_crop + 1))
        x0 = int(rng.integers(rec.lr_latent.shape[1] - lr_crop + 1))
        lr[b] = rec.lr_latent[y0:y0 + lr_crop, x0:x0 + lr_crop]
        n = lr_crop * f
        hr = rec.hr_latent[y0 * f:y0 * f + n, x0 * f:x0 * f + n].reshape(n * n, c)
        sel = rng.choice(n * n, size=hr_samples, replace=False)
        iy, ix = sel // n, sel % n
        coord[b, :, 0] = (2 * iy + 1 - n) / n
        coord[b, :, 1] = (2 * ix + 1 - n) / n
        cell[b] = 2.0 / n
        target[b] = hr[sel]
        picks.append(i)
        boxes.append((y0, x0, lr_crop, lr_crop))
        hr_boxes.append((y0 * f, x0 * f, n, n))
    return {"lr": lr, "coord": coord, "cell": cell, "target": target, "records": picks,
            "lr_boxes": boxes, "hr_boxes": hr_boxes, "augmented": False}


def check_disjoint(*splits: Iterable[str]) -> bool:
    sets = [set(s) for s in splits]
    return all(not (a & b) for i, a in enumerate(sets) for b in sets[i + 1:])
