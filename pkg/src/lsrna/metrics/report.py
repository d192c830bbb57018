"""Whole-image and patch-level FID/KID over an image set."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..images import load_png
from ..manifest import stable_hash
from .distances import GaussianMoments, frechet_distance, kid_blocks
from .embedders import FeatureEmbedder
from .patches import PatchProtocol, extract_aligned_patches, patch_coordinates, prepare_reference_image

IMAGE_SUFFIXES = (".png",)


@dataclass
class MetricReport:
    fid: float
    kid: float
    pfid: float
    pkid: float
    kid_stderr: float
    pkid_stderr: float
    n_generated: int
    n_reference: int
    seeds: dict = field(default_factory=dict)
    embedder: dict = field(default_factory=dict)
    protocol: dict = field(default_factory=dict)
    config_hash: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        return cls(**json.loads(text))

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(self.to_json())
        return path


def _fid(fa, fb) -> float:
    return frechet_distance(GaussianMoments.from_features(fa), GaussianMoments.from_features(fb))


def evaluate_arrays(generated: Sequence[np.ndarray], reference: Sequence[np.ndarray],
                    embedder: FeatureEmbedder, protocol: PatchProtocol,
                    kid_block_size: int | None = None) -> MetricReport:
    """Metrics for in-memory sets; references are cropped and resized to the generated size."""
    if len(generated) < 2 or len(reference) < 2:
        raise ValueError("each set needs at least two images")
    sizes = {im.shape[:2] for im in generated}
    if len(sizes) != 1:
        raise ValueError(f"generated images must share a size, got {sorted(sizes)}")
    h, w = sizes.pop()
    reference = [im if im.shape[:2] == (h, w) else prepare_reference_image(im, h, w) for im in reference]
    fg, fr = embedder.embed(generated), embedder.embed(reference)
    if fg.shape[1] != fr.shape[1]:
        raise ValueError("embedder produced mismatched feature dimensions")
    kid = kid_blocks(fg, fr, kid_block_size)
    pg, _ = extract_aligned_patches(generated, protocol, patch_coordinates(len(generated), h, w, protocol))
    pr, _ = extract_aligned_patches(reference, protocol, patch_coordinates(len(reference), h, w, protocol))
    pfg, pfr = embedder.embed(pg), embedder.embed(pr)
    pkid = kid_blocks(pfg, pfr, kid_block_size)
    desc = embedder.descriptor()
    proto = asdict(protocol)
    return MetricReport(
        fid=_fid(fg, fr), kid=kid.value, pfid=_fid(pfg, pfr), pkid=pkid.value,
        kid_stderr=kid.stderr, pkid_stderr=pkid.stderr,
        n_generated=len(generated), n_reference=len(reference),
        seeds={"patch": protocol.seed, "embedder": desc.get("seed")},
        embedder=desc, protocol=proto,
        config_hash=stable_hash({"embedder": desc, "protocol": proto, "kid_block_size": kid_block_size}))


def load_image_dir(directory: str | Path) -> tuple[list[str], list[np.ndarray]]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"{directory} is not a directory")
    paths = sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not paths:
        raise ValueError(f"no images in {directory}")
    images = []
    for p in paths:
        try:
            images.append(load_png(p))
        except Exception as exc:  # PIL raises several unrelated types
            raise ValueError(f"cannot read {p}: {exc}") from exc
    return [p.name for p in paths], images


def evaluate_set(generated_dir: str | Path, reference_dir: str | Path, embedder: FeatureEmbedder,
                 protocol: PatchProtocol, kid_block_size: int | None = None) -> MetricReport:
    _, gen = load_image_dir(generated_dir)
    _, ref = load_image_dir(reference_dir)
    return evaluate_arrays(gen, ref, embedder, protocol, kid_block_size)
