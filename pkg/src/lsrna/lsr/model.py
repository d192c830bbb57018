"""Latent super-resolution: backbone features + implicit coordinate upsampler.

Coordinates are ``(row, col)`` pairs in ``[-1, 1]^2`` with samples at cell
centres, ``c_i = (2i + 1 - n) / n``. A query at continuous position ``p``
(in feature-cell index units) blends the decoder outputs of its four
surrounding feature cells ``floor(p)`` and ``floor(p) + 1`` per axis with
bilinear weights, each prediction conditioned on the query's offset from
that cell and on the query's cell size. This is the local-ensemble decoder
with its area weights written in their bilinear form; at an exact cell
centre ``floor`` picks the lower index and the weight collapses onto it.

All inference-time MLP evaluation goes through fixed-size row chunks, so a
single query and the same query inside a full grid give bitwise-equal
results.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from ..archive import load_archive, save_archive
from ..images import check_latent
from ..resample import resize
from .backbones import ResidualConv, SwinLight

BACKBONES = ("lightweight-attention", "residual-conv")
CHUNK = 1024


@dataclass(frozen=True)
class LsrConfig:
    backbone: str = "lightweight-attention"
    depth: int = 4
    width: int = 60
    feature_dim: int = 60
    io_channels: int = 4
    mlp_widths: tuple[int, ...] = (256, 256, 256, 256)
    blocks_per_group: int = 6
    heads: int = 6
    window_size: int = 8
    cell_decode: bool = True

    def __post_init__(self):
        if self.backbone not in BACKBONES:
            raise ValueError(f"unknown backbone {self.backbone!r}; choose from {BACKBONES}")
        dims = [self.depth, self.width, self.feature_dim, self.io_channels, *self.mlp_widths]
        if min(dims) < 1:
            raise ValueError("all LSR dimensions must be >= 1")
        object.__setattr__(self, "mlp_widths", tuple(self.mlp_widths))


def make_coord(h: int, w: int) -> torch.Tensor:
    """``(h, w, 2)`` cell-centre coordinates, exactly antisymmetric about 0."""
    ys = (2 * torch.arange(h, dtype=torch.float64) + 1 - h) / h
    xs = (2 * torch.arange(w, dtype=torch.float64) + 1 - w) / w
    return torch.stack(torch.meshgrid(ys, xs, indexing="ij"), dim=-1).float()


def make_cell(h: int, w: int, n: int) -> torch.Tensor:
    return torch.tensor([2.0 / h, 2.0 / w]).expand(n, 2).clone()


class MLP(nn.Module):
    def __init__(self, in_dim, out_dim, hidden):
        super().__init__()
        layers, last = [], in_dim
        for width in hidden:
            layers += [nn.Linear(last, width), nn.ReLU()]
            last = width
        layers.append(nn.Linear(last, out_dim))
        self.layers = nn.Sequential(*layers)

    def forward(self, x):
        return self.layers(x)


def _chunked(fn, x: torch.Tensor, chunk: int) -> torch.Tensor:
    """Apply ``fn`` to rows of ``x`` in zero-padded blocks of exactly ``chunk`` rows."""
    n = x.shape[0]
    outs = []
    for start in range(0, n, chunk):
        blk = x[start:start + chunk]
        if blk.shape[0] < chunk:
            pad = x.new_zeros((chunk - blk.shape[0],) + tuple(x.shape[1:]))
            blk = torch.cat([blk, pad])
        outs.append(fn(blk))
    return torch.cat(outs)[:n]


class LsrModel(nn.Module):
    def __init__(self, cfg: LsrConfig):
        super().__init__()
        self.cfg = cfg
        if cfg.backbone == "residual-conv":
            self.backbone = ResidualConv(cfg.io_channels, cfg.width, cfg.depth, cfg.feature_dim)
        else:
            self.backbone = SwinLight(cfg.io_channels, cfg.width, cfg.depth, cfg.feature_dim,
                                      cfg.blocks_per_group, cfg.heads, cfg.window_size)
        in_dim = cfg.feature_dim + 2 + (2 if cfg.cell_decode else 0)
        self.imnet = MLP(in_dim, cfg.io_channels, cfg.mlp_widths)

    def features(self, z: torch.Tensor) -> torch.Tensor:
        return self.backbone(z)

    def query(self, feat: torch.Tensor, coord: torch.Tensor, cell: torch.Tensor,
              chunk: int | None = None) -> torch.Tensor:
        """Predict ``(B, Q, C)`` latent values at ``coord`` (``(B, Q, 2)``)."""
        b, cf, h, w = feat.shape
        q = coord.shape[1]
        flat = feat.reshape(b, cf, h * w)
        py = ((coord[..., 0] + 1) * h - 1) / 2
        px = ((coord[..., 1] + 1) * w - 1) / 2
        y0, x0 = torch.floor(py), torch.floor(px)
        fy, fx = py - y0, px - x0
        y0, x0 = y0.long(), x0.long()
        out = None
        for dy in (0, 1):
            for dx in (0, 1):
                iy = (y0 + dy).clamp(0, h - 1)
                ix = (x0 + dx).clamp(0, w - 1)
                idx = (iy * w + ix)[:, None, :].expand(b, cf, q)
                f = torch.gather(flat, 2, idx).permute(0, 2, 1)
                cy = (2 * iy + 1 - h).to(coord.dtype) / h
                cx = (2 * ix + 1 - w).to(coord.dtype) / w
                rel = torch.stack([(coord[..., 0] - cy) * h, (coord[..., 1] - cx) * w], dim=-1)
                parts = [f, rel]
                if self.cfg.cell_decode:
                    parts.append(torch.stack([cell[..., 0] * h, cell[..., 1] * w], dim=-1))
                inp = torch.cat(parts, dim=-1)
                if chunk is None:
                    pred = self.imnet(inp)
                else:
                    pred = _chunked(self.imnet, inp.reshape(b * q, -1), chunk).reshape(b, q, -1)
                wgt = (fy if dy else 1 - fy) * (fx if dx else 1 - fx)
                term = pred * wgt[..., None]
                out = term if out is None else out + term
        return out

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def _to_tensor(latent: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(latent, dtype=np.float32)).permute(2, 0, 1)[None]


def _check_channels(latent, model):
    latent = check_latent(latent)
    if latent.shape[2] != model.cfg.io_channels:
        raise ValueError(f"latent has {latent.shape[2]} channels, LSR expects {model.cfg.io_channels}")
    return latent


@torch.no_grad()
def extract_features(latent: np.ndarray, model: LsrModel) -> np.ndarray:
    latent = _check_channels(latent, model)
    return model.eval().features(_to_tensor(latent))[0].permute(1, 2, 0).numpy().copy()


@torch.no_grad()
def query_pixel(features: np.ndarray, coord, cell, model: LsrModel) -> np.ndarray:
    """Latent vector at one continuous coordinate of an ``h x w x C'`` feature map."""
    coord = np.asarray(coord, dtype=np.float32)
    if coord.shape != (2,) or np.any(np.abs(coord) > 1.0):
        raise ValueError(f"coordinate must be a pair in [-1, 1], got {coord}")
    feat = torch.from_numpy(np.ascontiguousarray(features, dtype=np.float32)).permute(2, 0, 1)[None]
    c = torch.from_numpy(coord).view(1, 1, 2)
    ce = torch.tensor(np.asarray(cell, dtype=np.float32)).view(1, 1, 2)
    return model.eval().query(feat, c, ce, chunk=CHUNK)[0, 0].numpy().copy()


@torch.no_grad()
def upsample_from_features(features: np.ndarray, target_h: int, target_w: int, model: LsrModel) -> np.ndarray:
    feat = torch.from_numpy(np.ascontiguousarray(features, dtype=np.float32)).permute(2, 0, 1)[None]
    coord = make_coord(target_h, target_w).view(1, -1, 2)
    cell = make_cell(target_h, target_w, coord.shape[1])[None]
    out = model.eval().query(feat, coord, cell, chunk=CHUNK)
    return out[0].view(target_h, target_w, -1).numpy().copy()


def upsample_latent(latent: np.ndarray, target_h: int, target_w: int, model: LsrModel) -> np.ndarray:
    """Arbitrary-scale learned upsampling of an ``h x w x C`` latent."""
    latent = _check_channels(latent, model)
    h, w = latent.shape[:2]
    if target_h < h or target_w < w:
        raise ValueError(f"upsampling cannot shrink {h}x{w} to {target_h}x{target_w}")
    return upsample_from_features(extract_features(latent, model), target_h, target_w, model)


def bicubic_latent_upsample(latent: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    latent = check_latent(latent)
    h, w = latent.shape[:2]
    if target_h < h or target_w < w:
        raise ValueError(f"upsampling cannot shrink {h}x{w} to {target_h}x{target_w}")
    return resize(latent, target_h, target_w, "bicubic")


def save_lsr(model: LsrModel, path: str | Path, meta: dict | None = None) -> Path:
    info = {"kind": "lsr", "config": asdict(model.cfg), **(meta or {})}
    return save_archive(path, model.state_dict(), info)


def load_lsr(path: str | Path) -> tuple[LsrModel, dict]:
    tensors, meta = load_archive(path)
    if meta.get("kind") != "lsr":
        raise ValueError(f"{path} is not an LSR archive")
    cfg = dict(meta["config"])
    cfg["mlp_widths"] = tuple(cfg["mlp_widths"])
    model = LsrModel(LsrConfig(**cfg))
    model.load_state_dict({k: torch.from_numpy(v) for k, v in tensors.items()})
    return model.eval(), meta
