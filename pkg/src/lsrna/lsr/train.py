"""LSR training loop: Adam + cosine annealing, L1 on sampled HR pixels."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np
import torch
from torch.nn import functional as F

from ..dataprep import PairDataset, sample_training_batch
from ..seeding import as_rng
from .model import LsrConfig, LsrModel, bicubic_latent_upsample, upsample_latent
from ..resample import resize

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LsrTrainConfig:
    # defaults follow the adopted v1 recipe; desk runs override iterations
    iterations: int = 200_000
    batch_size: int = 32
    lr: float = 2e-4
    cosine: bool = True
    lr_crop: int = 32
    hr_samples: int | None = None
    log_every: int = 100
    seed: int = 0


def mean_l1(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.mean(np.abs(np.asarray(a, np.float64) - np.asarray(b, np.float64))))


def validation_l1(model: LsrModel, pairs: PairDataset) -> tuple[list[float], list[float]]:
    """Per-pair latent L1 of LSR and of bicubic upsampling against the HR latent."""
    lsr, bic = [], []
    for r in pairs:
        hh, hw = r.hr_latent.shape[:2]
        lsr.append(mean_l1(upsample_latent(r.lr_latent, hh, hw, model), r.hr_latent))
        bic.append(mean_l1(bicubic_latent_upsample(r.lr_latent, hh, hw), r.hr_latent))
    return lsr, bic


def consistency_l1(model: LsrModel, latents) -> list[float]:
    """L1 between a latent and bicubic-downsampled x2 LSR output of it."""
    out = []
    for z in latents:
        h, w = z.shape[:2]
        up = upsample_latent(z, 2 * h, 2 * w, model)
        out.append(mean_l1(resize(up, h, w, "bicubic"), z))
    return out


def train_lsr(pairs: PairDataset, config: LsrConfig, train_cfg: LsrTrainConfig | None = None,
              val_pairs: PairDataset | None = None, rng=None) -> tuple[LsrModel, dict]:
    """Train an LSR model; returns the model and a log with loss curve and validation L1."""
    train_cfg = train_cfg or LsrTrainConfig()
    if len(pairs) == 0:
        raise ValueError("empty pair dataset")
    if len({r.lr_latent.shape[2] for r in pairs} | {r.hr_latent.shape[2] for r in pairs}) != 1:
        raise ValueError("pairs disagree on channel count")
    if pairs.channels != config.io_channels:
        raise ValueError(f"pairs have {pairs.channels} channels, config expects {config.io_channels}")
    seed = train_cfg.seed if rng is None else rng
    np_rng = as_rng(seed)
    torch.manual_seed(int(np_rng.integers(2 ** 31)))
    model = LsrModel(config).train()
    opt = torch.optim.Adam(model.parameters(), lr=train_cfg.lr)
    sched = (torch.optim.lr_scheduler.CosineAnnealingLR(opt, train_cfg.iterations)
             if train_cfg.cosine else None)
    curve = []
    t0 = time.time()
    for it in range(train_cfg.iterations):
        batch = sample_training_batch(pairs, train_cfg.batch_size, np_rng, train_cfg.lr_crop,
                                      train_cfg.hr_samples)
        assert not batch["augmented"]
        lr = torch.from_numpy(batch["lr"]).permute(0, 3, 1, 2)
        pred = model.query(model.features(lr), torch.from_numpy(batch["coord"]),
                           torch.from_numpy(batch["cell"]))
        loss = F.l1_loss(pred, torch.from_numpy(batch["target"]))
        if not torch.isfinite(loss):
            raise FloatingPointError(f"LSR loss is {loss.item()} at iteration {it} "
                                     f"(records {batch['records'][:4]}...)")
        opt.zero_grad()
        loss.backward()
        opt.step()
        if sched is not None:
            sched.step()
        curve.append(loss.item())
        if it % train_cfg.log_every == 0:
            log.info("lsr it %d loss %.4f", it, curve[-1])
    model.eval()
    lrs = [opt.param_groups[0]["lr"]]
    record = {"loss_curve": curve, "iterations": train_cfg.iterations, "seconds": time.time() - t0,
              "final_lr": lrs[0], "params": model.parameter_count()}
    if val_pairs is not None and len(val_pairs):
        lsr_l1, bic_l1 = validation_l1(model, val_pairs)
        cons = consistency_l1(model, [r.lr_latent for r in val_pairs])
        record.update(val_l1=float(np.mean(lsr_l1)), val_bicubic_l1=float(np.mean(bic_l1)),
                      consistency_bound=1.5 * max(cons))
    return model, record


def smoothed(curve, window: int = 50) -> np.ndarray:
    curve = np.asarray(curve, dtype=np.float64)
    window = max(1, min(window, len(curve)))
    return np.convolve(curve, np.ones(window) / window, mode="valid")
