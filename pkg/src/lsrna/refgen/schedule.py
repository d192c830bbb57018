"""Noise schedules, the closed-form forward process and the DDIM update."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..seeding import RngLike, as_rng


@dataclass(frozen=True)
class NoiseSchedule:
    """``betas[t - 1]`` is beta_t for t = 1..T; ``alphas_cum[0]`` is 1 by convention."""

    betas: np.ndarray
    alphas_cum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.ndim != 1 or betas.size < 1:
            raise ValueError("betas must be a non-empty 1-D array")
        if np.any(betas <= 0) or np.any(betas >= 1):
            raise ValueError("every beta must lie in (0, 1)")
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alphas_cum", np.concatenate([[1.0], np.cumprod(1.0 - betas)]))

    @property
    def total_steps(self) -> int:
        return self.betas.size

    def alpha_bar(self, t: int) -> float:
        self.check_t(t)
        return float(self.alphas_cum[t])

    def check_t(self, t: int) -> None:
        if not (0 <= t <= self.total_steps):
            raise ValueError(f"timestep {t} outside [0, {self.total_steps}]")

    def timestep_for_alpha_bar(self, target: float) -> int:
        """Smallest t >= 1 whose cumulative alpha is at or below ``target``."""
        idx = np.nonzero(self.alphas_cum[1:] <= target)[0]
        return int(idx[0]) + 1 if idx.size else self.total_steps


def make_schedule(kind: str = "linear", total_steps: int = 1000, beta_start: float = 1e-4,
                  beta_end: float = 0.02) -> NoiseSchedule:
    if kind == "linear":
        betas = np.linspace(beta_start, beta_end, total_steps)
    elif kind == "scaled_linear":
        # the Stable Diffusion family schedule
        betas = np.linspace(beta_start ** 0.5, beta_end ** 0.5, total_steps) ** 2
    else:
        raise ValueError(f"unknown schedule kind {kind!r}")
    return NoiseSchedule(betas)


def forward_noise(z0: np.ndarray, t: int, schedule: NoiseSchedule, rng: RngLike,
                  noise: np.ndarray | None = None) -> np.ndarray:
    """Sample ``z_t ~ q(z_t | z_0)`` in closed form."""
    schedule.check_t(t)
    z0 = np.asarray(z0)
    if t == 0:
        return z0.copy()
    if noise is None:
        noise = as_rng(rng).standard_normal(z0.shape)
    ab = schedule.alphas_cum[t]
    return (np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * noise).astype(z0.dtype)


def predict_x0(z_t: np.ndarray, eps: np.ndarray, t: int, schedule: NoiseSchedule) -> np.ndarray:
    ab = schedule.alpha_bar(t)
    return (z_t - np.sqrt(1.0 - ab) * eps) / np.sqrt(ab)


def ddim_sigma(schedule: NoiseSchedule, t: int, t_prev: int, eta: float) -> float:
    a_t, a_p = schedule.alpha_bar(t), schedule.alpha_bar(t_prev)
    return float(eta * np.sqrt((1.0 - a_p) / (1.0 - a_t) * (1.0 - a_t / a_p)))


def ddim_step(z_t: np.ndarray, eps_pred: np.ndarray, t: int, t_prev: int, schedule: NoiseSchedule,
              eta: float = 0.0, rng: RngLike = None, noise: np.ndarray | None = None) -> np.ndarray:
    """One DDIM update from ``t`` to ``t_prev``; no randomness is drawn when ``eta == 0``."""
    if not (t > t_prev >= 0):
        raise ValueError(f"DDIM needs t > t_prev >= 0, got t={t}, t_prev={t_prev}")
    if not (0.0 <= eta <= 1.0):
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    z_t = np.asarray(z_t)
    x0 = predict_x0(z_t, eps_pred, t, schedule)
    a_p = schedule.alpha_bar(t_prev)
    sigma = ddim_sigma(schedule, t, t_prev, eta)
    out = np.sqrt(a_p) * x0 + np.sqrt(max(1.0 - a_p - sigma ** 2, 0.0)) * eps_pred
    if sigma > 0:
        if noise is None:
            noise = as_rng(rng).standard_normal(z_t.shape)
        out = out + sigma * noise
    return out.astype(z_t.dtype)


def ddim_timesteps(t_start: int, steps: int) -> list[int]:
    """Uniform decreasing grid ``t_start = t_0 > ... > t_steps = 0``."""
    if steps < 1 or steps > t_start:
        raise ValueError(f"cannot take {steps} steps from t={t_start}")
    grid = np.round(np.linspace(t_start, 0, steps + 1)).astype(int).tolist()
    if any(a <= b for a, b in zip(grid, grid[1:])):
        raise ValueError("timestep grid is not strictly decreasing")
    return grid
