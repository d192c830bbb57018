"""Feature backbones for latent super-resolution.

Both map ``(B, C, h, w)`` latents to ``(B, C', h, w)`` features at the same
spatial size. ``ResidualConv`` is an EDSR-style stack; ``SwinLight`` is a
compact shifted-window attention network in the spirit of lightweight
SwinIR.
"""

from __future__ import annotations

import torch
from torch import nn
from torch.nn import functional as F


class ResBlock(nn.Module):
    def __init__(self, ch: int, res_scale: float = 1.0):
        super().__init__()
        self.body = nn.Sequential(nn.Conv2d(ch, ch, 3, padding=1), nn.ReLU(inplace=True),
                                  nn.Conv2d(ch, ch, 3, padding=1))
        self.res_scale = res_scale

    def forward(self, x):
        return x + self.body(x) * self.res_scale


class ResidualConv(nn.Module):
    def __init__(self, in_ch: int, width: int, depth: int, out_ch: int):
        super().__init__()
        self.head = nn.Conv2d(in_ch, width, 3, padding=1)
        self.body = nn.Sequential(*[ResBlock(width) for _ in range(depth)],
                                  nn.Conv2d(width, width, 3, padding=1))
        self.tail = nn.Conv2d(width, out_ch, 3, padding=1)

    def forward(self, x):
        x = self.head(x)
        return self.tail(x + self.body(x))


def _window_partition(x, ws):
    b, h, w, c = x.shape
    x = x.view(b, h // ws, ws, w // ws, ws, c).permute(0, 1, 3, 2, 4, 5)
    return x.reshape(-1, ws * ws, c)


def _window_merge(windows, ws, b, h, w):
    c = windows.shape[-1]
    x = windows.view(b, h // ws, w // ws, ws, ws, c).permute(0, 1, 3, 2, 4, 5)
    return x.reshape(b, h, w, c)


class WindowAttention(nn.Module):
    def __init__(self, dim, heads, ws):
        super().__init__()
        self.heads = heads
        self.ws = ws
        self.scale = (dim // heads) ** -0.5
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)
        self.rel_bias = nn.Parameter(torch.zeros((2 * ws - 1) ** 2, heads))
        nn.init.trunc_normal_(self.rel_bias, std=0.02)
        coords = torch.stack(torch.meshgrid(torch.arange(ws), torch.arange(ws), indexing="ij")).flatten(1)
        rel = (coords[:, :, None] - coords[:, None, :]).permute(1, 2, 0) + (ws - 1)
        self.register_buffer("rel_index", rel[..., 0] * (2 * ws - 1) + rel[..., 1], persistent=False)

    def forward(self, x, mask=None):
        bw, n, c = x.shape
        qkv = self.qkv(x).reshape(bw, n, 3, self.heads, c // self.heads).permute(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        attn = (q * self.scale) @ k.transpose(-2, -1)
        attn = attn + self.rel_bias[self.rel_index.view(-1)].view(n, n, -1).permute(2, 0, 1)[None]
        if mask is not None:
            nw = mask.shape[0]
            attn = attn.view(bw // nw, nw, self.heads, n, n) + mask[None, :, None]
            attn = attn.view(-1, self.heads, n, n)
        attn = attn.softmax(dim=-1)
        return self.proj((attn @ v).transpose(1, 2).reshape(bw, n, c))


class SwinBlock(nn.Module):
    def __init__(self, dim, heads, ws, shift, mlp_ratio=2.0):
        super().__init__()
        self.ws, self.shift = ws, shift
        self.norm1 = nn.LayerNorm(dim)
        self.attn = WindowAttention(dim, heads, ws)
        self.norm2 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))

    def _mask(self, h, w, device):
        if not self.shift:
            return None
        img = torch.zeros(1, h, w, 1, device=device)
        cnt = 0
        sl = (slice(0, -self.ws), slice(-self.ws, -self.shift), slice(-self.shift, None))
        for hs in sl:
            for wsl in sl:
                img[:, hs, wsl, :] = cnt
                cnt += 1
        win = _window_partition(img, self.ws).squeeze(-1)
        m = win[:, None, :] - win[:, :, None]
        return m.masked_fill(m != 0, -100.0).masked_fill(m == 0, 0.0)

    def forward(self, x):
        b, h, w, c = x.shape
        y = self.norm1(x)
        if self.shift:
            y = torch.roll(y, (-self.shift, -self.shift), dims=(1, 2))
        y = _window_merge(self.attn(_window_partition(y, self.ws), self._mask(h, w, x.device)), self.ws, b, h, w)
        if self.shift:
            y = torch.roll(y, (self.shift, self.shift), dims=(1, 2))
        x = x + y
        return x + self.mlp(self.norm2(x))


class SwinGroup(nn.Module):
    def __init__(self, dim, blocks, heads, ws):
        super().__init__()
        self.blocks = nn.ModuleList([SwinBlock(dim, heads, ws, 0 if i % 2 == 0 else ws // 2)
                                     for i in range(blocks)])
        self.conv = nn.Conv2d(dim, dim, 3, padding=1)

    def forward(self, x):  # x: (B, C, H, W)
        y = x.permute(0, 2, 3, 1)
        for blk in self.blocks:
            y = blk(y)
        return x + self.conv(y.permute(0, 3, 1, 2))


class SwinLight(nn.Module):
    def __init__(self, in_ch: int, width: int = 60, depth: int = 4, out_ch: int = 60,
                 blocks_per_group: int = 6, heads: int = 6, window_size: int = 8):
        super().__init__()
        self.ws = window_size
        self.head = nn.Conv2d(in_ch, width, 3, padding=1)
        self.groups = nn.Sequential(*[SwinGroup(width, blocks_per_group, heads, window_size)
                                      for _ in range(depth)])
        self.norm = nn.LayerNorm(width)
        self.after = nn.Conv2d(width, width, 3, padding=1)
        self.tail = nn.Conv2d(width, out_ch, 3, padding=1)

    def forward(self, x):
        h, w = x.shape[-2:]
        ph, pw = (-h) % self.ws, (-w) % self.ws
        if ph or pw:
            x = F.pad(x, (0, pw, 0, ph), mode="reflect" if min(h, w) > max(ph, pw) else "replicate")
        f = self.head(x)
        y = self.groups(f)
        y = self.norm(y.permute(0, 2, 3, 1)).permute(0, 3, 1, 2)
        out = self.tail(f + self.after(y))
        return out[..., :h, :w]
