"""Region-wise noise addition.

Pipeline: decode the reference latent, run Canny on the decoded image, pool
the binary edge map down to the target latent grid (edge density), map the
density affinely onto ``[e_min, e_max]`` and use the result as a per-cell
standard deviation for Gaussian noise added to the upsampled guidance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .images import check_image, check_latent, to_gray
from .seeding import RngLike, as_rng

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T


@dataclass(frozen=True)
class RnaConfig:
    e_min: float = 0.0
    e_max: float = 1.2
    canny_low: float = 0.0
    canny_high: float = 255.0
    blur_sigma: float = 1.4
    blur_size: int = 5
    rng_seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.e_min <= self.e_max):
            raise ValueError(f"need 0 <= e_min <= e_max, got [{self.e_min}, {self.e_max}]")
        if self.canny_low > self.canny_high:
            raise ValueError(f"canny_low {self.canny_low} > canny_high {self.canny_high}")
        if self.blur_size < 1 or self.blur_size % 2 == 0:
            raise ValueError("blur_size must be a positive odd integer")


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    if sigma <= 0:
        k = np.zeros((size, size))
        k[size // 2, size // 2] = 1.0
        return k
    ax = np.arange(size) - size // 2
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def gradient_field(image: np.ndarray, config: RnaConfig) -> tuple[np.ndarray, np.ndarray]:
    """Blurred-Sobel gradients ``(gy, gx)`` of the 0..255 luma image."""
    gray = to_gray(check_image(image)) * 255.0
    smooth = ndimage.convolve(gray, gaussian_kernel(config.blur_size, config.blur_sigma), mode="reflect")
    # ndimage.convolve flips the kernel; correlate keeps the textbook sign
    gx = ndimage.correlate(smooth, SOBEL_X, mode="reflect")
    gy = ndimage.correlate(smooth, SOBEL_Y, mode="reflect")
    return gy, gx


def non_maximum_suppression(gy: np.ndarray, gx: np.ndarray) -> np.ndarray:
    """Gradient magnitude where it is a local maximum across the edge, else 0.

    Directions are quantised to 0/45/90/135 degrees. Ties are broken
    asymmetrically (strict on one side) so plateaus yield one-pixel edges.
    The one-pixel image border is always suppressed.
    """
    mag = np.hypot(gx, gy)
    h, w = mag.shape
    out = np.zeros_like(mag)
    if h < 3 or w < 3:
        return out
    theta = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    # (row, col) step along the gradient for each bin
    steps = {0: (0, 1), 1: (1, 1), 2: (1, 0), 3: (1, -1)}
    bins = np.floor(((theta + 22.5) % 180.0) / 45.0).astype(int)
    c = mag[1:-1, 1:-1]
    keep = np.zeros(c.shape, dtype=bool)
    for b, (dy, dx) in steps.items():
        fwd = mag[1 + dy:h - 1 + dy, 1 + dx:w - 1 + dx]
        bwd = mag[1 - dy:h - 1 - dy, 1 - dx:w - 1 - dx]
        keep |= (bins[1:-1, 1:-1] == b) & (c > bwd) & (c >= fwd)
    out[1:-1, 1:-1] = np.where(keep & (c > 0), c, 0.0)
    return out


def hysteresis(nms: np.ndarray, low: float, high: float) -> np.ndarray:
    """Keep weak pixels (> low) only if 8-connected to a strong pixel (> high)."""
    weak = nms > low
    strong = weak & (nms > high)
    labels, count = ndimage.label(weak, structure=np.ones((3, 3), dtype=bool))
    if count == 0:
        return np.zeros(nms.shape, dtype=np.uint8)
    good = np.zeros(count + 1, dtype=bool)
    good[np.unique(labels[strong])] = True
    good[0] = False
    return good[labels].astype(np.uint8)


def canny_edges(image: np.ndarray, config: RnaConfig | None = None) -> np.ndarray:
    """Binary ``H x W`` Canny edge map of an RGB image in ``[0, 1]``.

    Thresholds apply to raw Sobel magnitudes of the 0..255 luma image, so
    they can exceed 255 for strong steps.
    """
    config = config or RnaConfig()
    gy, gx = gradient_field(image, config)
    return hysteresis(non_maximum_suppression(gy, gx), config.canny_low, config.canny_high)


def area_weights(in_size: int, out_size: int) -> np.ndarray:
    """``(out, in)`` matrix of input-pixel coverage fractions per output cell."""
    if out_size < 1:
        raise ValueError("target size must be >= 1")
    if out_size > in_size:
        raise ValueError(f"average pooling cannot enlarge ({in_size} -> {out_size})")
    r = in_size / out_size
    lo = np.arange(out_size)[:, None] * r
    hi = lo + r
    j = np.arange(in_size)[None, :]
    overlap = np.clip(np.minimum(hi, j + 1) - np.maximum(lo, j), 0.0, None)
    return overlap / r


def pool_edge_map(edges: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    """Area-weighted average pooling of a binary map to ``target_h x target_w``."""
    edges = np.asarray(edges, dtype=np.float64)
    if target_h < 1 or target_w < 1:
        raise ValueError("target size must be >= 1")
    density = area_weights(edges.shape[0], target_h) @ edges @ area_weights(edges.shape[1], target_w).T
    return np.clip(density, 0.0, 1.0)


def noise_scale_map(density: np.ndarray, config: RnaConfig) -> np.ndarray:
    density = np.asarray(density, dtype=np.float64)
    if density.size and (density.min() < 0.0 or density.max() > 1.0):
        raise ValueError("edge density must lie in [0, 1]")
    return config.e_min + density * (config.e_max - config.e_min)


def apply_rna(guidance: np.ndarray, scales: np.ndarray, rng: RngLike,
              noise: np.ndarray | None = None) -> np.ndarray:
    """``guidance + scales * eps`` with one scale per cell shared across channels.

    ``noise`` overrides the standard-normal draw (same shape as guidance).
    """
    guidance = check_latent(guidance, "guidance")
    scales = np.asarray(scales, dtype=np.float64)
    if scales.shape != guidance.shape[:2]:
        raise ValueError(f"scale map {scales.shape} does not match guidance grid {guidance.shape[:2]}")
    if noise is None:
        noise = as_rng(rng).standard_normal(guidance.shape)
    elif noise.shape != guidance.shape:
        raise ValueError(f"noise shape {noise.shape} != guidance shape {guidance.shape}")
    if not np.any(scales):
        return guidance.copy()
    return guidance + (scales[..., None] * noise).astype(guidance.dtype)


def apply_una(guidance: np.ndarray, sigma: float, rng: RngLike) -> np.ndarray:
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    guidance = check_latent(guidance, "guidance")
    return apply_rna(guidance, np.full(guidance.shape[:2], float(sigma)), rng)


def edge_density_for(reference_image: np.ndarray, target_h: int, target_w: int,
                     config: RnaConfig) -> tuple[np.ndarray, np.ndarray]:
    """Edge map of the decoded reference and its density on the target grid.

    When the target grid is larger than the reference image (extreme
    upscaling with a small codec), the edge map is first replicated up to
    a size divisible by the target.
    """
    edges = canny_edges(reference_image, config)
    src = edges
    if target_h > edges.shape[0] or target_w > edges.shape[1]:
        fy = -(-target_h // edges.shape[0])
        fx = -(-target_w // edges.shape[1])
        src = np.repeat(np.repeat(edges, fy, axis=0), fx, axis=1)
    return edges, pool_edge_map(src, target_h, target_w)
