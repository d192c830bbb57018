"""Histogram matching and the edge / non-edge pixel-difference diagnostic."""

from __future__ import annotations

import numpy as np

from ..images import check_image


def _match_channel(src: np.ndarray, ref: np.ndarray) -> np.ndarray:
    _, s_inv, s_counts = np.unique(src.ravel(), return_inverse=True, return_counts=True)
    r_vals, r_counts = np.unique(ref.ravel(), return_counts=True)
    # generalized inverse of the reference CDF, so discrete references stay discrete
    s_q = np.cumsum(s_counts) / src.size
    r_q = np.cumsum(r_counts) / ref.size
    idx = np.minimum(np.searchsorted(r_q, s_q - 1e-12, side="left"), r_vals.size - 1)
    return r_vals[idx][s_inv].reshape(src.shape)


def histogram_match(src: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Map each channel of ``src`` through its CDF onto the quantiles of ``ref``."""
    src, ref = np.asarray(src, dtype=np.float64), np.asarray(ref, dtype=np.float64)
    if src.ndim == 2 and ref.ndim == 2:
        return _match_channel(src, ref)
    if src.ndim != 3 or ref.ndim != 3 or src.shape[2] != ref.shape[2]:
        raise ValueError(f"channel counts differ: {src.shape} vs {ref.shape}")
    return np.stack([_match_channel(src[..., c], ref[..., c]) for c in range(src.shape[2])], axis=-1)


def region_difference_report(with_rna: np.ndarray, without_rna: np.ndarray, edges: np.ndarray) -> dict:
    """Mean absolute difference (0-255 units) on edge and non-edge pixels, after histogram matching."""
    a = check_image(with_rna, "with_rna")
    b = check_image(without_rna, "without_rna")
    edges = np.asarray(edges).astype(bool)
    if a.shape != b.shape or edges.shape != a.shape[:2]:
        raise ValueError(f"size mismatch: {a.shape}, {b.shape}, edges {edges.shape}")
    if edges.all() or not edges.any():
        raise ValueError("edge map must contain both edge and non-edge pixels")
    diff = np.abs(histogram_match(a, b) - b).mean(axis=2) * 255.0
    edge_mean = float(diff[edges].mean())
    nonedge_mean = float(diff[~edges].mean())
    return {"edge_mean": edge_mean, "nonedge_mean": nonedge_mean, "gap": edge_mean - nonedge_mean}
