"""Guidance blending and overlapping-patch noise prediction."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from ..seeding import RngLike
from .schedule import NoiseSchedule, forward_noise

UPSAMPLE_MODES = ("lsr", "latent-bicubic", "rgb-bicubic", "rgb-sr")
T_INIT_RULES = ("alpha-bar", "steps", "fixed")


@dataclass(frozen=True)
class GuidanceConfig:
    """How the upsampled reference steers the high-resolution trajectory.

    ``t_init_rule`` picks the starting timestep:

    * ``alpha-bar``: first timestep whose cumulative alpha drops to ``init_alpha_bar``;
    * ``steps``: ``T * steps / full_steps``, i.e. the first ``steps`` points of a
      ``full_steps``-point uniform grid over ``[0, T]``;
    * ``fixed``: ``t_init`` as given.

    ``level`` is the resolution token handed to the denoiser during refinement.
    """

    steps: int = 30
    full_steps: int = 50
    t_init_rule: str = "alpha-bar"
    init_alpha_bar: float = 0.5
    t_init: int | None = None
    eta: float = 0.0
    blend_exponent: float = 3.0
    upsample_mode: str = "lsr"
    level: int = 1
    patch: int | None = None
    stride: int | None = None

    def __post_init__(self):
        if self.steps < 1 or self.full_steps < 1:
            raise ValueError("step counts must be >= 1")
        if self.t_init_rule not in T_INIT_RULES:
            raise ValueError(f"unknown t_init_rule {self.t_init_rule!r}; choose from {T_INIT_RULES}")
        if self.t_init_rule == "fixed" and self.t_init is None:
            raise ValueError("t_init_rule 'fixed' needs t_init")
        if self.t_init is not None and self.t_init < 1:
            raise ValueError("t_init must be >= 1")
        if not (0.0 < self.init_alpha_bar < 1.0):
            raise ValueError("init_alpha_bar must lie in (0, 1)")
        if not (0.0 <= self.eta <= 1.0):
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        if self.blend_exponent < 0:
            raise ValueError("blend_exponent must be >= 0")
        if self.upsample_mode not in UPSAMPLE_MODES:
            raise ValueError(f"unknown upsample_mode {self.upsample_mode!r}; choose from {UPSAMPLE_MODES}")
        if self.level < 0:
            raise ValueError("level must be >= 0")
        if self.patch is not None and self.patch < 1:
            raise ValueError("patch must be >= 1")
        if self.stride is not None and self.stride < 1:
            raise ValueError("stride must be >= 1")

    def resolve_t_init(self, schedule: NoiseSchedule) -> int:
        T = schedule.total_steps
        if self.t_init_rule == "fixed":
            t = int(self.t_init)
        elif self.t_init_rule == "steps":
            t = int(round(T * self.steps / self.full_steps))
        else:
            t = schedule.timestep_for_alpha_bar(self.init_alpha_bar)
        if not (1 <= t <= T):
            raise ValueError(f"resolved t_init {t} outside [1, {T}]")
        if self.steps > t:
            raise ValueError(f"{self.steps} steps do not fit below t_init={t}")
        return t


def blend_weight(t: int, t_init: int, exponent: float) -> float:
    """Cosine-decayed guidance weight: 1 at ``t_init``, 0 at ``t = 0``."""
    if not (0 <= t <= t_init):
        raise ValueError(f"timestep {t} outside [0, t_init={t_init}]")
    if t == t_init or exponent == 0:
        return 1.0
    if t == 0:
        return 0.0
    return ((1.0 + math.cos(math.pi * (t_init - t) / t_init)) / 2.0) ** exponent


def inject_guidance(z_t: np.ndarray, guidance: np.ndarray, t: int, config: GuidanceConfig,
                    schedule: NoiseSchedule, rng: RngLike, noise: np.ndarray | None = None,
                    t_init: int | None = None) -> np.ndarray:
    """Blend the trajectory with freshly noised guidance at weight ``c_t``."""
    z_t = np.asarray(z_t)
    if np.shape(guidance) != z_t.shape:
        raise ValueError(f"guidance shape {np.shape(guidance)} != latent shape {z_t.shape}")
    t_init = config.resolve_t_init(schedule) if t_init is None else t_init
    c = blend_weight(t, t_init, config.blend_exponent)
    if c == 0.0:
        return z_t.copy()
    noised = forward_noise(np.asarray(guidance, dtype=z_t.dtype), t, schedule, rng, noise=noise)
    if c == 1.0:
        return noised
    return (c * noised + (1.0 - c) * z_t).astype(z_t.dtype)


class NoisePredictor(Protocol):
    def predict(self, latents: np.ndarray, t: int, cond, level: int = 0) -> np.ndarray: ...


def _axis_offsets(n: int, p: int, stride: int) -> list[int]:
    offs = list(range(0, n - p + 1, stride))
    if offs[-1] != n - p:
        offs.append(n - p)
    return offs


@dataclass(frozen=True)
class PatchPlan:
    height: int
    width: int
    patch_h: int
    patch_w: int
    stride: int
    offsets: tuple[tuple[int, int], ...]
    weights: np.ndarray  # per-pixel 1 / coverage count

    @property
    def coverage(self) -> np.ndarray:
        cov = np.zeros((self.height, self.width), dtype=np.int64)
        for y, x in self.offsets:
            cov[y:y + self.patch_h, x:x + self.patch_w] += 1
        return cov


def make_patch_plan(height: int, width: int, patch: int, stride: int | None = None) -> PatchPlan:
    """Overlapping square patches; the final row/column is shifted flush with the border."""
    if min(height, width, patch) < 1:
        raise ValueError("grid and patch sizes must be >= 1")
    ph, pw = min(patch, height), min(patch, width)
    stride = stride or max(patch // 2, 1)
    offsets = tuple((y, x) for y in _axis_offsets(height, ph, stride) for x in _axis_offsets(width, pw, stride))
    cov = np.zeros((height, width), dtype=np.int64)
    for y, x in offsets:
        cov[y:y + ph, x:x + pw] += 1
    if cov.min() < 1:
        raise ValueError("patch plan leaves cells uncovered")
    return PatchPlan(height, width, ph, pw, stride, offsets, 1.0 / cov)


def patchwise_predict(z_t: np.ndarray, model: NoisePredictor, plan: PatchPlan, t: int, cond,
                      level: int = 0, batch: int = 64) -> np.ndarray:
    """Weighted average of per-patch predictions, accumulated in plan order."""
    z_t = np.asarray(z_t)
    if z_t.shape[:2] != (plan.height, plan.width):
        raise ValueError(f"plan is for {plan.height}x{plan.width}, latent is {z_t.shape[:2]}")
    if plan.coverage.min() < 1:
        raise ValueError("patch plan leaves cells uncovered")
    out = np.zeros(z_t.shape, dtype=np.float64)
    ph, pw = plan.patch_h, plan.patch_w
    for start in range(0, len(plan.offsets), batch):
        offs = plan.offsets[start:start + batch]
        stack = np.stack([z_t[y:y + ph, x:x + pw] for y, x in offs])
        preds = model.predict(stack, t, cond, level)
        for (y, x), p in zip(offs, preds):
            out[y:y + ph, x:x + pw] += p * plan.weights[y:y + ph, x:x + pw, None]
    return out.astype(z_t.dtype)
