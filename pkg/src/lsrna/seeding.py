"""Seed plumbing: every random draw in the package goes through here."""

from __future__ import annotations

import hashlib
from typing import Union

import numpy as np
import torch

RngLike = Union[int, np.random.Generator, None]


def as_rng(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        raise ValueError("an explicit seed or Generator is required")
    return np.random.default_rng(rng)


def derive_seed(seed: int, *keys: int | str) -> int:
    """Stable 63-bit child seed for ``(seed, *keys)``; independent of call order."""
    h = hashlib.sha256(repr((int(seed),) + tuple(keys)).encode()).digest()
    return int.from_bytes(h[:8], "little") >> 1


def torch_generator(seed: int) -> torch.Generator:
    return torch.Generator().manual_seed(int(seed))
