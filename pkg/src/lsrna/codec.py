"""Image <-> latent codecs.

Two backends share one interface (``encode``/``decode`` on numpy arrays):

* ``MockCodec`` -- space-to-depth by ``s`` followed by a fixed orthonormal
  channel mix. Linear and exactly invertible, used wherever a test needs
  to reason about latents in closed form.
* ``TinyCodec`` -- a small strided convolutional autoencoder trained with a
  reconstruction loss. Lossy, like a real LDM autoencoder.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .archive import load_archive, save_archive
from .images import check_image, check_latent

log = logging.getLogger(__name__)

BACKENDS = ("invertible-mock", "learned-tiny")


@dataclass(frozen=True)
class CodecSpec:
    s: int = 8
    channels: int = 4
    backend: str = "learned-tiny"

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown codec backend {self.backend!r}")
        if self.s < 1:
            raise ValueError(f"compression ratio s must be >= 1, got {self.s}")
        if self.channels < 1:
            raise ValueError("channel count must be >= 1")
        if self.backend == "invertible-mock" and self.channels != 3 * self.s ** 2:
            raise ValueError(f"invertible-mock needs C = 3*s^2 = {3 * self.s ** 2}, got {self.channels}")
        if self.backend == "learned-tiny" and self.s & (self.s - 1):
            raise ValueError(f"learned-tiny needs a power-of-two s, got {self.s}")

    @classmethod
    def mock(cls, s: int = 2) -> "CodecSpec":
        return cls(s=s, channels=3 * s * s, backend="invertible-mock")


class Codec:
    spec: CodecSpec

    @property
    def s(self) -> int:
        return self.spec.s

    @property
    def channels(self) -> int:
        return self.spec.channels

    def _check_encode(self, image):
        image = check_image(image)
        h, w = image.shape[:2]
        if h % self.s or w % self.s:
            raise ValueError(f"image size {h}x{w} not divisible by s={self.s}")
        return image

    def _check_decode(self, latent):
        latent = check_latent(latent)
        if latent.shape[2] != self.channels:
            raise ValueError(f"latent has {latent.shape[2]} channels, codec expects {self.channels}")
        return latent

    def encode(self, image: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def decode(self, latent: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def encode_batch(self, images: Sequence[np.ndarray]) -> list[np.ndarray]:
        return [self.encode(im) for im in images]


def space_to_depth(x: np.ndarray, s: int) -> np.ndarray:
    h, w, c = x.shape
    return x.reshape(h // s, s, w // s, s, c).transpose(0, 2, 1, 3, 4).reshape(h // s, w // s, s * s * c)


def depth_to_space(z: np.ndarray, s: int) -> np.ndarray:
    h, w, d = z.shape
    c = d // (s * s)
    return z.reshape(h, w, s, s, c).transpose(0, 2, 1, 3, 4).reshape(h * s, w * s, c)


class MockCodec(Codec):
    """Exactly invertible linear codec (float64 throughout)."""

    def __init__(self, spec: CodecSpec | None = None, seed: int = 0):
        spec = spec or CodecSpec.mock()
        if spec.backend != "invertible-mock":
            raise ValueError("MockCodec needs an invertible-mock spec")
        self.spec = spec
        q, r = np.linalg.qr(np.random.default_rng(seed).standard_normal((spec.channels, spec.channels)))
        # sign fix makes the factorisation unique
        self.mixing = q * np.sign(np.diag(r))

    def encode(self, image):
        image = self._check_encode(image)
        return space_to_depth(image.astype(np.float64), self.s) @ self.mixing

    def decode(self, latent):
        latent = self._check_decode(latent)
        return depth_to_space(np.asarray(latent, dtype=np.float64) @ self.mixing.T, self.s)


class PixelCodec(Codec):
    """Identity "codec" (s=1, C=3) for running latent-space tools on RGB images."""

    def __init__(self):
        self.spec = CodecSpec(s=1, channels=3, backend="invertible-mock")

    def encode(self, image):
        return self._check_encode(image).astype(np.float64)

    def decode(self, latent):
        return np.asarray(self._check_decode(latent), dtype=np.float64)


class _ResBlock(nn.Module):
    def __init__(self, ch):
        super().__init__()
        self.c1 = nn.Conv2d(ch, ch, 3, padding=1)
        self.c2 = nn.Conv2d(ch, ch, 3, padding=1)

    def forward(self, x):
        return x + self.c2(F.silu(self.c1(F.silu(x))))


class TinyAutoencoder(nn.Module):
    def __init__(self, s: int = 8, channels: int = 4, width: int = 32):
        super().__init__()
        n_down = int(round(math.log2(s)))
        enc: list[nn.Module] = [nn.Conv2d(3, width, 3, padding=1)]
        for _ in range(n_down):
            enc += [nn.SiLU(), nn.Conv2d(width, width, 4, stride=2, padding=1)]
        enc += [_ResBlock(width), nn.SiLU(), nn.Conv2d(width, channels, 3, padding=1)]
        self.encoder = nn.Sequential(*enc)
        dec: list[nn.Module] = [nn.Conv2d(channels, width, 3, padding=1), _ResBlock(width)]
        for _ in range(n_down):
            dec += [nn.Upsample(scale_factor=2, mode="nearest"), nn.Conv2d(width, width, 3, padding=1), nn.SiLU()]
        dec += [nn.Conv2d(width, 3, 3, padding=1)]
        self.decoder = nn.Sequential(*dec)


@dataclass
class CodecTrainConfig:
    iterations: int = 1500
    batch_size: int = 16
    crop: int = 32
    lr: float = 1e-3
    latent_penalty: float = 1e-3
    latent_noise: float = 0.1
    seed: int = 0


class TinyCodec(Codec):
    """Learned autoencoder. Latents are scaled to roughly unit variance."""

    def __init__(self, spec: CodecSpec | None = None, width: int = 32, seed: int = 0):
        spec = spec or CodecSpec()
        if spec.backend != "learned-tiny":
            raise ValueError("TinyCodec needs a learned-tiny spec")
        self.spec = spec
        self.width = width
        torch.manual_seed(seed)
        self.net = TinyAutoencoder(spec.s, spec.channels, width).eval()
        self.latent_scale = 1.0
        self.val_mae: float | None = None
        self.log: list[dict] = []

    @torch.no_grad()
    def encode(self, image):
        image = self._check_encode(image)
        x = torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32)).permute(2, 0, 1)[None]
        z = self.net.encoder(x * 2.0 - 1.0) * self.latent_scale
        return z[0].permute(1, 2, 0).numpy().copy()

    @torch.no_grad()
    def decode(self, latent):
        latent = self._check_decode(latent)
        z = torch.from_numpy(np.ascontiguousarray(latent, dtype=np.float32)).permute(2, 0, 1)[None]
        x = (self.net.decoder(z / self.latent_scale) + 1.0) * 0.5
        return x.clamp(0.0, 1.0)[0].permute(1, 2, 0).numpy().astype(np.float64)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.net.parameters())

    # -- persistence --
    def save(self, path: str | Path) -> Path:
        meta = {"kind": "codec", "spec": asdict(self.spec), "width": self.width,
                "latent_scale": self.latent_scale, "val_mae": self.val_mae}
        return save_archive(path, self.net.state_dict(), meta)

    @classmethod
    def load(cls, path: str | Path) -> "TinyCodec":
        tensors, meta = load_archive(path)
        if meta.get("kind") != "codec":
            raise ValueError(f"{path} is not a codec archive")
        codec = cls(CodecSpec(**meta["spec"]), width=meta["width"])
        codec.net.load_state_dict({k: torch.from_numpy(v) for k, v in tensors.items()})
        codec.latent_scale = float(meta["latent_scale"])
        codec.val_mae = meta.get("val_mae")
        return codec


def make_codec(spec: CodecSpec, seed: int = 0) -> Codec:
    if spec.backend == "invertible-mock":
        return MockCodec(spec, seed=seed)
    return TinyCodec(spec, seed=seed)


def encode(image: np.ndarray, codec: Codec) -> np.ndarray:
    return codec.encode(image)


def decode(latent: np.ndarray, codec: Codec) -> np.ndarray:
    return codec.decode(latent)


def _random_crops(images, n, crop, rng):
    out = np.empty((n, crop, crop, 3), dtype=np.float32)
    for k in range(n):
        im = images[rng.integers(len(images))]
        y = rng.integers(im.shape[0] - crop + 1)
        x = rng.integers(im.shape[1] - crop + 1)
        out[k] = im[y:y + crop, x:x + crop]
    return torch.from_numpy(out).permute(0, 3, 1, 2)


def train_codec(train_images: Sequence[np.ndarray], val_images: Sequence[np.ndarray],
                spec: CodecSpec | None = None, cfg: CodecTrainConfig | None = None,
                width: int = 32) -> TinyCodec:
    """Fit a ``TinyCodec`` on random crops; records validation MAE and a loss log."""
    cfg = cfg or CodecTrainConfig()
    spec = spec or CodecSpec()
    if not train_images or not val_images:
        raise ValueError("codec training needs non-empty train and validation sets")
    if cfg.crop % spec.s:
        raise ValueError(f"crop {cfg.crop} not divisible by s={spec.s}")
    codec = TinyCodec(spec, width=width, seed=cfg.seed)
    net = codec.net.train()
    rng = np.random.default_rng(cfg.seed)
    gen = torch.Generator().manual_seed(cfg.seed)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, cfg.iterations)
    for it in range(cfg.iterations):
        x = _random_crops(train_images, cfg.batch_size, cfg.crop, rng) * 2.0 - 1.0
        z = net.encoder(x)
        noisy = z + cfg.latent_noise * torch.randn(z.shape, generator=gen)
        loss = F.l1_loss(net.decoder(noisy), x) + cfg.latent_penalty * z.pow(2).mean()
        if not torch.isfinite(loss):
            raise FloatingPointError(f"codec loss became {loss.item()} at iteration {it}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        sched.step()
        if it % 50 == 0 or it == cfg.iterations - 1:
            codec.log.append({"iteration": it, "loss": loss.item(), "lr": sched.get_last_lr()[0]})
    net.eval()
    with torch.no_grad():
        zs = [net.encoder(torch.from_numpy(np.ascontiguousarray(im, dtype=np.float32)).permute(2, 0, 1)[None] * 2 - 1)
              for im in train_images[:64]]
        codec.latent_scale = float(1.0 / torch.cat([z.flatten() for z in zs]).std())
    codec.val_mae = reconstruction_mae(codec, val_images)
    log.info("codec trained: val MAE %.4f, latent scale %.3f", codec.val_mae, codec.latent_scale)
    return codec


def reconstruction_mae(codec: Codec, images: Iterable[np.ndarray]) -> float:
    errs = [np.abs(codec.decode(codec.encode(im)) - im).mean() for im in images]
    return float(np.mean(errs))
