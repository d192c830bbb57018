"""Procedural desk dataset.

Every scene is a continuous function of normalised coordinates, so the
same scene can be rendered at any resolution: a 64 px render plays the role
of a base-resolution generation and a 128 px render of the same scene is
its high-resolution ground truth. Scenes have a smooth background and a
class-specific foreground carrying fine texture, which gives the metrics
and the edge-adaptive noise something to distinguish.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CLASSES = ("rings", "stripes", "checker", "blobs")
NUM_CLASSES = len(CLASSES)


@dataclass(frozen=True)
class SceneId:
    label: int
    index: int
    split: str = "train"

    @property
    def source_id(self) -> str:
        return f"{self.split}-{CLASSES[self.label]}-{self.index:05d}"


_SPLIT_SALT = {"train": 11, "val": 23, "test": 37, "gen": 41}


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


class Scene:
    def __init__(self, sid: SceneId):
        self.sid = sid
        rng = np.random.default_rng([_SPLIT_SALT[sid.split], sid.label, sid.index])
        self.bg0 = rng.uniform(0.15, 0.85, 3)
        self.bg1 = np.clip(self.bg0 + rng.normal(0.0, 0.15, 3), 0.05, 0.95)
        self.bg_dir = rng.uniform(0, 2 * np.pi)
        # pattern phases are dark/bright so boundaries carry real contrast
        self.fg0 = rng.uniform(0.0, 0.3, 3)
        self.fg1 = rng.uniform(0.7, 1.0, 3)
        if rng.random() < 0.5:
            self.fg0, self.fg1 = self.fg1, self.fg0
        self.center = rng.uniform(0.3, 0.7, 2)
        self.radius = rng.uniform(0.22, 0.38)
        self.freq = rng.uniform(4.0, 7.0)
        self.angle = rng.uniform(0, np.pi)
        bright_bg = self.bg0.mean() > 0.5
        self.blobs = [(rng.uniform(0.15, 0.85, 2), rng.uniform(0.07, 0.16),
                       rng.uniform(0.0, 0.3, 3) if bright_bg else rng.uniform(0.7, 1.0, 3))
                      for _ in range(rng.integers(3, 6))]
        # fine texture: a few high-frequency plane waves
        self.tex = [(rng.uniform(18.0, 34.0), rng.uniform(0, 2 * np.pi), rng.uniform(0, 2 * np.pi))
                    for _ in range(3)]
        self.tex_amp = rng.uniform(0.10, 0.18)

    def _texture(self, u, v):
        t = np.zeros_like(u)
        for f, th, ph in self.tex:
            t += np.sin(2 * np.pi * f * (u * np.cos(th) + v * np.sin(th)) + ph)
        return t / len(self.tex)

    def evaluate(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Colour at normalised coordinates ``(u, v)`` in ``[0, 1]^2`` (u = row)."""
        g = 0.5 + 0.5 * np.sin(np.cos(self.bg_dir) * (u - 0.5) * 2 + np.sin(self.bg_dir) * (v - 0.5) * 2)
        img = self.bg0 + (self.bg1 - self.bg0) * g[..., None]
        du, dv = u - self.center[0], v - self.center[1]
        r = np.sqrt(du * du + dv * dv)
        label = self.sid.label
        if label == 0:
            mask = _smoothstep((self.radius - r) / 0.02)
            pat = _smoothstep(0.5 + 2.0 * np.sin(np.pi * self.freq * r / self.radius))
        elif label == 1:
            mask = _smoothstep((self.radius - np.maximum(np.abs(du), np.abs(dv))) / 0.02)
            p = du * np.cos(self.angle) + dv * np.sin(self.angle)
            pat = _smoothstep(0.5 + 2.0 * np.sin(2 * np.pi * self.freq * p))
        elif label == 2:
            mask = _smoothstep((self.radius - r) / 0.02)
            a, b = du * np.cos(self.angle) + dv * np.sin(self.angle), -du * np.sin(self.angle) + dv * np.cos(self.angle)
            pat = _smoothstep(0.5 + 2.0 * np.sin(2 * np.pi * self.freq * a) * np.sin(2 * np.pi * self.freq * b))
        else:
            mask = np.zeros_like(u)
            col = np.zeros(u.shape + (3,))
            for (c, rad, bc) in self.blobs:
                rr = np.sqrt((u - c[0]) ** 2 + (v - c[1]) ** 2)
                m = _smoothstep((rad - rr) / 0.015)
                mask = np.maximum(mask, m)
                col = col * (1 - m[..., None]) + m[..., None] * bc
        if label == 3:
            fg = col
        else:
            fg = self.fg0 + (self.fg1 - self.fg0) * pat[..., None]
        fg = fg * (1.0 + self.tex_amp * self._texture(u, v))[..., None]
        img = img * (1 - mask[..., None]) + fg * mask[..., None]
        return np.clip(img, 0.0, 1.0)

    def render(self, height: int, width: int | None = None, supersample: int = 3) -> np.ndarray:
        width = width or height
        ss = supersample
        # subpixel sample positions of a box filter
        ys = (np.arange(height * ss) + 0.5) / (height * ss)
        xs = (np.arange(width * ss) + 0.5) / (width * ss)
        u, v = np.meshgrid(ys, xs, indexing="ij")
        img = self.evaluate(u, v)
        return img.reshape(height, ss, width, ss, 3).mean(axis=(1, 3))


def scene_ids(split: str, per_class: int, start: int = 0) -> list[SceneId]:
    return [SceneId(label, start + i, split) for i in range(per_class) for label in range(NUM_CLASSES)]


def render_set(ids, size: int, supersample: int = 3) -> list[np.ndarray]:
    return [Scene(s).render(size, supersample=supersample) for s in ids]
