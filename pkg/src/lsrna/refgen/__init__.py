from .denoiser import (DenoiserConfig, DenoiserModel, DenoiserTrainConfig, epsilon_mse,
                       train_toy_denoiser)
from .guidance import (UPSAMPLE_MODES, GuidanceConfig, PatchPlan, blend_weight, inject_guidance,
                       make_patch_plan, patchwise_predict)
from .pipeline import (GenerationResult, PipelineParts, generate_reference, lsrna_generate, refine,
                       target_size, upsample_guidance)
from .schedule import (NoiseSchedule, ddim_sigma, ddim_step, ddim_timesteps, forward_noise,
                       make_schedule, predict_x0)

__all__ = [
    "DenoiserConfig", "DenoiserModel", "DenoiserTrainConfig", "GenerationResult", "GuidanceConfig",
    "NoiseSchedule", "PatchPlan", "PipelineParts", "UPSAMPLE_MODES", "blend_weight", "ddim_sigma",
    "ddim_step", "ddim_timesteps", "epsilon_mse", "forward_noise", "generate_reference",
    "inject_guidance", "lsrna_generate", "make_patch_plan", "make_schedule", "patchwise_predict",
    "predict_x0", "refine", "target_size", "train_toy_denoiser", "upsample_guidance",
]
