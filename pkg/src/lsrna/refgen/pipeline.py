"""Reference generation and the single-shot upsample / noise / refine pipeline."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..codec import Codec
from ..lsr.model import LsrModel, bicubic_latent_upsample, upsample_latent
from ..resample import resize
from ..rna import RnaConfig, apply_rna, edge_density_for, noise_scale_map
from ..seeding import RngLike, as_rng, derive_seed
from .denoiser import DenoiserModel
from .guidance import GuidanceConfig, inject_guidance, make_patch_plan, patchwise_predict
from .schedule import NoiseSchedule, ddim_step, ddim_timesteps, forward_noise


def _require_trained(model) -> None:
    if not getattr(model, "trained", False):
        raise RuntimeError("denoiser is flagged untrained; train or load weights first")


def generate_reference(cond, model: DenoiserModel, schedule: NoiseSchedule, steps: int, rng: RngLike,
                       shape: tuple[int, int, int], eta: float = 0.0) -> np.ndarray:
    """Full DDIM trajectory from pure noise at the base latent size."""
    _require_trained(model)
    rng = as_rng(rng)
    z = rng.standard_normal(shape).astype(np.float32)
    grid = ddim_timesteps(schedule.total_steps, steps)
    for t, t_prev in zip(grid, grid[1:]):
        eps = model.predict(z, t, cond)
        z = ddim_step(z, eps, t, t_prev, schedule, eta, rng)
    return z


@dataclass
class PipelineParts:
    codec: Codec
    denoiser: DenoiserModel
    schedule: NoiseSchedule
    lsr: LsrModel | None = None
    rgb_sr: LsrModel | None = None  # an RGB-space model with io_channels = 3


def target_size(h: int, w: int, scale: float) -> tuple[int, int]:
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    return int(round(h * scale)), int(round(w * scale))


def upsample_guidance(reference: np.ndarray, target_h: int, target_w: int, mode: str,
                      parts: PipelineParts) -> np.ndarray:
    """Upsample the reference latent to the target grid in one shot."""
    if mode == "lsr":
        if parts.lsr is None:
            raise ValueError("upsample_mode 'lsr' needs an LSR model")
        return upsample_latent(reference, target_h, target_w, parts.lsr)
    if mode == "latent-bicubic":
        return bicubic_latent_upsample(reference, target_h, target_w).astype(np.float32)
    s = parts.codec.s
    image = parts.codec.decode(reference)
    if mode == "rgb-bicubic":
        big = resize(image, target_h * s, target_w * s, "bicubic")
    elif mode == "rgb-sr":
        if parts.rgb_sr is None:
            raise ValueError("upsample_mode 'rgb-sr' needs an RGB super-resolution model")
        big = upsample_latent(image, target_h * s, target_w * s, parts.rgb_sr)
    else:
        raise ValueError(f"unknown upsample_mode {mode!r}")
    return parts.codec.encode(np.clip(big, 0.0, 1.0)).astype(np.float32)


@dataclass
class GenerationResult:
    image: np.ndarray
    latent: np.ndarray
    reference: np.ndarray
    guidance: np.ndarray
    info: dict = field(default_factory=dict)


def refine(guidance: np.ndarray, cond, config: GuidanceConfig, parts: PipelineParts, seed: int,
           patch: int) -> tuple[np.ndarray, dict]:
    """Guided, patchwise DDIM from ``t_init`` down to 0."""
    schedule = parts.schedule
    t_init = config.resolve_t_init(schedule)
    grid = ddim_timesteps(t_init, config.steps)
    h, w = guidance.shape[:2]
    plan = make_patch_plan(h, w, config.patch or patch, config.stride)
    rng = np.random.default_rng(derive_seed(seed, "trajectory"))
    z = forward_noise(guidance, t_init, schedule, rng)
    for t, t_prev in zip(grid, grid[1:]):
        z = inject_guidance(z, guidance, t, config, schedule, rng, t_init=t_init)
        eps = patchwise_predict(z, parts.denoiser, plan, t, cond, config.level)
        z = ddim_step(z, eps, t, t_prev, schedule, config.eta, rng)
    return z, {"t_init": t_init, "timesteps": grid, "patches": len(plan.offsets),
               "patch": plan.patch_h, "stride": plan.stride}


def lsrna_generate(cond, scale: float, guidance_config: GuidanceConfig, rna_config: RnaConfig,
                   parts: PipelineParts, seed: int, reference: np.ndarray | None = None,
                   base_shape: tuple[int, int] = (16, 16), reference_steps: int = 50) -> GenerationResult:
    """Reference, upsample, region-wise noise, guided refinement, decode.

    Every stochastic stage draws from its own stream derived from ``seed``,
    so switching RNA on or off leaves the reference and trajectory noise as
    they were.
    """
    _require_trained(parts.denoiser)
    if reference is None:
        shape = (*base_shape, parts.codec.channels)
        reference = generate_reference(cond, parts.denoiser, parts.schedule, reference_steps,
                                       derive_seed(seed, "reference"), shape)
    h, w = reference.shape[:2]
    th, tw = target_size(h, w, scale)
    guidance = upsample_guidance(reference, th, tw, guidance_config.upsample_mode, parts)
    info: dict = {"seed": seed, "scale": scale, "target": [th, tw],
                  "guidance_config": asdict(guidance_config), "rna_config": asdict(rna_config)}
    if rna_config.e_max > 0:
        _, density = edge_density_for(parts.codec.decode(reference), th, tw, rna_config)
        scales = noise_scale_map(density, rna_config)
        guidance = apply_rna(guidance, scales, derive_seed(seed, "rna", rna_config.rng_seed))
        info["edge_density_mean"] = float(density.mean())
    latent, traj = refine(guidance, cond, guidance_config, parts, seed, patch=min(h, w))
    info.update(traj)
    return GenerationResult(parts.codec.decode(latent), latent, reference, guidance, info)
