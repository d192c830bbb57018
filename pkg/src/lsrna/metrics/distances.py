"""Frechet distance between Gaussians and the polynomial-kernel MMD."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PSD_TOL = 1e-6


@dataclass(frozen=True)
class GaussianMoments:
    mean: np.ndarray
    cov: np.ndarray
    count: int

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise ValueError(f"mean {mean.shape} and covariance {cov.shape} disagree")
        if self.count < 2:
            raise ValueError("moments need at least two samples")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(1.0, np.abs(cov).max())):
            raise ValueError("covariance is not symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def from_features(cls, feats: np.ndarray) -> "GaussianMoments":
        feats = np.asarray(feats, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] < 2:
            raise ValueError(f"need an (n >= 2, d) feature array, got {feats.shape}")
        cov = np.cov(feats, rowvar=False)
        cov = np.atleast_2d((cov + cov.T) / 2)
        return cls(feats.mean(axis=0), cov, feats.shape[0])

    @property
    def dim(self) -> int:
        return self.mean.size


def _psd_eigvals(m: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    try:
        vals, vecs = np.linalg.eigh((m + m.T) / 2)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"eigendecomposition of {what} did not converge") from exc
    tol = PSD_TOL * max(1.0, float(np.abs(vals).max(initial=0.0)))
    if vals.min(initial=0.0) < -tol:
        raise ValueError(f"{what} is not positive semidefinite (min eigenvalue {vals.min():.3g})")
    return np.clip(vals, 0.0, None), vecs


def frechet_distance(a: GaussianMoments, b: GaussianMoments) -> float:
    """``|mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2))``.

    The trace of the product root is computed as the trace of the root of
    the symmetric matrix ``S_a^(1/2) S_b S_a^(1/2)``, which has the same
    eigenvalues.
    """
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if np.array_equal(a.mean, b.mean) and np.array_equal(a.cov, b.cov):
        return 0.0
    va, ua = _psd_eigvals(a.cov, "first covariance")
    _psd_eigvals(b.cov, "second covariance")
    root_a = (ua * np.sqrt(va)) @ ua.T
    vm, _ = _psd_eigvals(root_a @ b.cov @ root_a, "covariance product")
    diff = a.mean - b.mean
    value = float(diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2.0 * np.sqrt(vm).sum())
    return max(value, 0.0)


def polynomial_kernel(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    d = x.shape[1]
    return (x @ y.T / d + 1.0) ** 3


def mmd_unbiased(x: np.ndarray, y: np.ndarray) -> float:
    """Unbiased MMD^2 U-statistic with the cubic polynomial kernel."""
    n, m = x.shape[0], y.shape[0]
    kxx, kyy, kxy = polynomial_kernel(x, x), polynomial_kernel(y, y), polynomial_kernel(x, y)
    sxx = (kxx.sum() - np.trace(kxx)) / (n * (n - 1))
    syy = (kyy.sum() - np.trace(kyy)) / (m * (m - 1))
    return float(sxx + syy - 2.0 * kxy.mean())


@dataclass(frozen=True)
class KidResult:
    value: float
    stderr: float
    blocks: tuple[float, ...]


def kid_blocks(feats_a: np.ndarray, feats_b: np.ndarray, block_size: int | None = None,
               n_blocks: int = 10) -> KidResult:
    """Mean of the U-statistic over contiguous blocks of ``block_size`` rows.

    ``block_size`` defaults to ``min(n_a, n_b) // n_blocks``.
    """
    a = np.asarray(feats_a, dtype=np.float64)
    b = np.asarray(feats_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError(f"feature sets must be (n, d) with equal d, got {a.shape} and {b.shape}")
    n = min(a.shape[0], b.shape[0])
    if n < 2:
        raise ValueError("KID needs at least two samples per set")
    bs = max(n // n_blocks, 2) if block_size is None else block_size
    if not (2 <= bs <= n):
        raise ValueError(f"block_size must lie in [2, {n}], got {bs}")
    vals = tuple(mmd_unbiased(a[i:i + bs], b[i:i + bs]) for i in range(0, n - bs + 1, bs))
    err = float(np.std(vals, ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else float("nan")
    return KidResult(float(np.mean(vals)), err, vals)


def kid_mmd(feats_a: np.ndarray, feats_b: np.ndarray, block_size: int | None = None) -> float:
    return kid_blocks(feats_a, feats_b, block_size).value
