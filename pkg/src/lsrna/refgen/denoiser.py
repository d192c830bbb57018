"""A small class-conditional epsilon-prediction UNet and its training loop."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from ..archive import load_archive, save_archive
from ..seeding import RngLike, as_rng
from .schedule import NoiseSchedule

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DenoiserConfig:
    channels: int = 4
    width: int = 64
    n_classes: int = 4
    n_levels: int = 2
    emb_dim: int = 128
    global_context: bool = False


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float32) / half)
    args = t.float()[:, None] * freqs[None]
    return torch.cat([torch.cos(args), torch.sin(args)], dim=-1)


class EmbResBlock(nn.Module):
    def __init__(self, cin, cout, emb_dim):
        super().__init__()
        self.n1 = nn.GroupNorm(8, cin)
        self.c1 = nn.Conv2d(cin, cout, 3, padding=1)
        self.emb = nn.Linear(emb_dim, cout)
        self.n2 = nn.GroupNorm(8, cout)
        self.c2 = nn.Conv2d(cout, cout, 3, padding=1)
        self.skip = nn.Conv2d(cin, cout, 1) if cin != cout else nn.Identity()

    def forward(self, x, emb):
        h = self.c1(F.silu(self.n1(x)))
        h = h + self.emb(emb)[:, :, None, None]
        h = self.c2(F.silu(self.n2(h)))
        return self.skip(x) + h


class ToyUNet(nn.Module):
    """Two-level UNet; inputs are padded to a multiple of 4 and cropped back."""

    def __init__(self, cfg: DenoiserConfig):
        super().__init__()
        w, e = cfg.width, cfg.emb_dim
        self.cfg = cfg
        self.t_mlp = nn.Sequential(nn.Linear(e, e), nn.SiLU(), nn.Linear(e, e))
        self.c_emb = nn.Embedding(cfg.n_classes, e)
        # resolution token: which image scale a latent crop was taken from
        self.l_emb = nn.Embedding(cfg.n_levels, e)
        self.inp = nn.Conv2d(cfg.channels, w, 3, padding=1)
        self.d1 = EmbResBlock(w, w, e)
        self.down1 = nn.Conv2d(w, 2 * w, 3, stride=2, padding=1)
        self.d2 = EmbResBlock(2 * w, 2 * w, e)
        self.down2 = nn.Conv2d(2 * w, 2 * w, 3, stride=2, padding=1)
        self.mid1 = EmbResBlock(2 * w, 2 * w, e)
        self.mid2 = EmbResBlock(2 * w, 2 * w, e)
        # pooled bottleneck summary, so every cell sees the image-level statistics
        self.glob = nn.Linear(2 * w, 2 * w) if cfg.global_context else None
        self.u2 = EmbResBlock(4 * w, 2 * w, e)
        self.u1 = EmbResBlock(3 * w, w, e)
        self.out_norm = nn.GroupNorm(8, w)
        self.out = nn.Conv2d(w, cfg.channels, 3, padding=1)
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)

    def forward(self, x, t, cond, level):
        h0, w0 = x.shape[-2:]
        ph, pw = (-h0) % 4, (-w0) % 4
        if ph or pw:
            x = F.pad(x, (0, pw, 0, ph), mode="replicate")
        emb = self.t_mlp(timestep_embedding(t, self.cfg.emb_dim)) + self.c_emb(cond) + self.l_emb(level)
        a = self.d1(self.inp(x), emb)
        b = self.d2(self.down1(a), emb)
        m = self.mid1(self.down2(b), emb)
        if self.glob is not None:
            m = m + self.glob(m.mean(dim=(2, 3)))[:, :, None, None]
        m = self.mid2(m, emb)
        u = self.u2(torch.cat([F.interpolate(m, scale_factor=2, mode="nearest"), b], 1), emb)
        u = self.u1(torch.cat([F.interpolate(u, scale_factor=2, mode="nearest"), a], 1), emb)
        return self.out(F.silu(self.out_norm(u)))[..., :h0, :w0]


class DenoiserModel:
    """Numpy-facing wrapper: ``predict`` maps ``(B, h, w, C)`` latents to noise estimates."""

    def __init__(self, cfg: DenoiserConfig | None = None, seed: int = 0):
        self.cfg = cfg or DenoiserConfig()
        torch.manual_seed(seed)
        self.net = ToyUNet(self.cfg).eval()
        self.trained = False
        self.loss_curve: list[float] = []
        self.meta: dict = {}

    @property
    def channels(self) -> int:
        return self.cfg.channels

    @torch.no_grad()
    def predict(self, latents: np.ndarray, t: int, cond: int | Sequence[int], level: int = 0) -> np.ndarray:
        z = np.asarray(latents, dtype=np.float32)
        single = z.ndim == 3
        if single:
            z = z[None]
        if z.shape[-1] != self.cfg.channels:
            raise ValueError(f"latent has {z.shape[-1]} channels, denoiser expects {self.cfg.channels}")
        n = z.shape[0]
        labels = np.broadcast_to(np.asarray(cond, dtype=np.int64), (n,))
        if labels.min() < 0 or labels.max() >= self.cfg.n_classes:
            raise ValueError(f"class label out of range [0, {self.cfg.n_classes})")
        if not (0 <= level < self.cfg.n_levels):
            raise ValueError(f"level {level} out of range [0, {self.cfg.n_levels})")
        x = torch.from_numpy(np.ascontiguousarray(z)).permute(0, 3, 1, 2)
        eps = self.net(x, torch.full((n,), int(t)), torch.from_numpy(labels.copy()),
                       torch.full((n,), int(level)))
        out = eps.permute(0, 2, 3, 1).numpy().copy()
        return out[0] if single else out

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.net.parameters())

    def save(self, path: str | Path) -> Path:
        meta = {"kind": "denoiser", "config": asdict(self.cfg), "trained": self.trained,
                "loss_curve": self.loss_curve, **self.meta}
        return save_archive(path, self.net.state_dict(), meta)

    @classmethod
    def load(cls, path: str | Path) -> "DenoiserModel":
        tensors, meta = load_archive(path)
        if meta.get("kind") != "denoiser":
            raise ValueError(f"{path} is not a denoiser archive")
        model = cls(DenoiserConfig(**meta["config"]))
        model.net.load_state_dict({k: torch.from_numpy(v) for k, v in tensors.items()})
        model.trained = bool(meta.get("trained"))
        model.loss_curve = list(meta.get("loss_curve", []))
        model.meta = {k: v for k, v in meta.items() if k not in ("kind", "config", "trained", "loss_curve")}
        return model


@dataclass
class DenoiserTrainConfig:
    iterations: int = 4000
    batch_size: int = 64
    crop: int = 16
    lr: float = 1e-3
    log_every: int = 25
    seed: int = 0


def _crop_batch(latents, labels, levels, n, crop, rng):
    out = np.empty((n, crop, crop, latents[0].shape[2]), dtype=np.float32)
    lab = np.empty(n, dtype=np.int64)
    lev = np.empty(n, dtype=np.int64)
    for k in range(n):
        i = int(rng.integers(len(latents)))
        z = latents[i]
        y = int(rng.integers(z.shape[0] - crop + 1))
        x = int(rng.integers(z.shape[1] - crop + 1))
        out[k] = z[y:y + crop, x:x + crop]
        lab[k] = labels[i]
        lev[k] = levels[i]
    return torch.from_numpy(out).permute(0, 3, 1, 2), torch.from_numpy(lab), torch.from_numpy(lev)


def train_toy_denoiser(latents: Sequence[np.ndarray], labels: Sequence[int], schedule: NoiseSchedule,
                       cfg: DenoiserTrainConfig | None = None, model_cfg: DenoiserConfig | None = None,
                       rng: RngLike = None, levels: Sequence[int] | None = None) -> DenoiserModel:
    """Epsilon-prediction MSE on random latent crops with uniformly drawn timesteps.

    ``levels`` tags each latent with the resolution it was rendered at
    (0 = base); all zeros when omitted.
    """
    cfg = cfg or DenoiserTrainConfig()
    if len(latents) == 0:
        raise ValueError("denoiser training needs a non-empty latent set")
    if len(latents) != len(labels):
        raise ValueError("latents and labels differ in length")
    levels = [0] * len(latents) if levels is None else list(levels)
    if len(levels) != len(latents):
        raise ValueError("latents and levels differ in length")
    if min(min(z.shape[:2]) for z in latents) < cfg.crop:
        raise ValueError(f"every latent must be at least {cfg.crop} cells on a side")
    model_cfg = model_cfg or DenoiserConfig(channels=latents[0].shape[2], n_classes=int(max(labels)) + 1,
                                            n_levels=int(max(levels)) + 1)
    rng = as_rng(cfg.seed if rng is None else rng)
    gen = torch.Generator().manual_seed(cfg.seed)
    model = DenoiserModel(model_cfg, seed=cfg.seed)
    net = model.net.train()
    ab = torch.from_numpy(schedule.alphas_cum).float()
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, cfg.iterations)
    running = []
    for it in range(cfg.iterations):
        z0, lab, lev = _crop_batch(latents, labels, levels, cfg.batch_size, cfg.crop, rng)
        t = torch.randint(1, schedule.total_steps + 1, (cfg.batch_size,), generator=gen)
        eps = torch.randn(z0.shape, generator=gen)
        a = ab[t][:, None, None, None]
        zt = a.sqrt() * z0 + (1 - a).sqrt() * eps
        pred = net(zt, t, lab, lev)
        loss = F.mse_loss(pred, eps)
        if not torch.isfinite(loss):
            raise FloatingPointError(f"denoiser loss became {loss.item()} at iteration {it}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        sched.step()
        running.append(loss.item())
        if (it + 1) % cfg.log_every == 0 or it == cfg.iterations - 1:
            model.loss_curve.append(float(np.mean(running)))
            running = []
    net.eval()
    model.trained = True
    model.meta = {"iterations": cfg.iterations, "seed": cfg.seed}
    log.info("denoiser trained: final loss %.4f", model.loss_curve[-1])
    return model


@torch.no_grad()
def epsilon_mse(model: DenoiserModel, latents: Sequence[np.ndarray], labels: Sequence[int],
                schedule: NoiseSchedule, rng: RngLike, zero_baseline: bool = False, level: int = 0) -> float:
    """Validation noise-prediction MSE (or the zero-prediction baseline)."""
    rng = as_rng(rng)
    errs = []
    for z0, c in zip(latents, labels):
        t = int(rng.integers(1, schedule.total_steps + 1))
        eps = rng.standard_normal(z0.shape)
        a = schedule.alphas_cum[t]
        zt = np.sqrt(a) * z0 + np.sqrt(1 - a) * eps
        pred = 0.0 if zero_baseline else model.predict(zt, t, c, level)
        errs.append(np.mean((pred - eps) ** 2))
    return float(np.mean(errs))
