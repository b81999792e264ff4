"""Hand-crafted sharpness features of a grayscale patch.

Three descriptors, each log-compressed and normalized to unit sum (a patch
with no signal yields the zero vector):

* dct_feature  - mean absolute DCT power per radial frequency band; blur
  drains the high bands.
* gradient_feature - histogram of Sobel magnitudes over the fixed range
  [0, 4*sqrt(2)] (the largest magnitude a [0,1] patch can produce); blur
  empties the upper bins.
* svd_feature  - the leading singular values of the patch matrix; blur
  shortens the spectrum's tail.

low_rank_approx reconstructs a patch from its leading singular triplets and
exists to validate the SVD route.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import fft as spfft

from .errors import InputError, NumericError
from .kernels import sobel_gradients

GRAD_MAX = 4.0 * math.sqrt(2.0)


def dct2(patch):
    """Orthonormal 2-D DCT-II of a square patch."""
    patch = np.asarray(patch, dtype=np.float64)
    if patch.ndim != 2 or patch.shape[0] != patch.shape[1]:
        raise InputError(f"dct2 expects a square patch, got {patch.shape}")
    if patch.shape[0] < 2:
        raise InputError("dct2 needs side >= 2")
    return spfft.dctn(patch, type=2, norm="ortho")


def idct2(coeffs):
    """Inverse of dct2."""
    return spfft.idctn(np.asarray(coeffs, dtype=np.float64), type=2, norm="ortho")


@dataclass
class PolarBandPartition:
    """Radial partition of an n x n coefficient grid into frequency bands.

    Cell (u, v) has radius hypot(u, v); band boundaries are linearly spaced
    on [0, sqrt(2)*(n-1)], the DC cell lands in band 1, and every cell
    belongs to exactly one band.
    """
    n: int
    n_bands: int
    boundaries: np.ndarray
    band_of_cell: np.ndarray  # (n, n) int
    counts: np.ndarray        # cells per band

    @classmethod
    def build(cls, n, n_bands):
        if n_bands < 1 or n < 2:
            raise InputError("need n >= 2 and n_bands >= 1")
        u = np.arange(n, dtype=np.float64)
        rho = np.hypot(u[:, None], u[None, :])
        rho_max = math.sqrt(2.0) * (n - 1)
        boundaries = np.linspace(0.0, rho_max, n_bands + 1)
        band = np.searchsorted(boundaries, rho.ravel(), side="right") - 1
        band = np.minimum(band, n_bands - 1).reshape(n, n)
        counts = np.bincount(band.ravel(), minlength=n_bands)
        return cls(n=n, n_bands=n_bands, boundaries=boundaries,
                   band_of_cell=band, counts=counts)


def _normalize_log(values):
    compressed = np.log1p(values)
    total = compressed.sum()
    if total <= 0.0:
        return np.zeros_like(compressed)
    return compressed / total


def dct_feature(coeffs, partition):
    """Mean |coefficient| per radial band, log-compressed, unit sum."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape != (partition.n, partition.n):
        raise InputError("coefficient grid does not match the partition")
    sums = np.bincount(partition.band_of_cell.ravel(),
                       weights=np.abs(coeffs).ravel(),
                       minlength=partition.n_bands)
    means = np.divide(sums, partition.counts,
                      out=np.zeros_like(sums), where=partition.counts > 0)
    return _normalize_log(means)


def gradient_feature(patch, n_bins):
    """Histogram of interior Sobel magnitudes, log-compressed, unit sum."""
    patch = np.asarray(patch, dtype=np.float64)
    if patch.ndim != 2 or min(patch.shape) < 3:
        raise InputError("gradient_feature needs a 2-D patch with side >= 3")
    gx, gy = sobel_gradients(patch)
    mag = np.hypot(gx, gy)
    counts, _ = np.histogram(np.minimum(mag, GRAD_MAX), bins=n_bins,
                             range=(0.0, GRAD_MAX))
    return _normalize_log(counts.astype(np.float64))


def singular_values(patch):
    patch = np.asarray(patch, dtype=np.float64)
    try:
        return np.linalg.svd(patch, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"SVD did not converge: {exc}") from exc


def svd_feature(patch, n_values):
    """Leading singular values, log-compressed, unit sum."""
    patch = np.asarray(patch, dtype=np.float64)
    if patch.ndim != 2 or min(patch.shape) < n_values:
        raise InputError("patch side must be >= the feature dimension")
    return _normalize_log(singular_values(patch)[:n_values])


def low_rank_approx(patch, n):
    """Reconstruction from the n leading singular triplets."""
    patch = np.asarray(patch, dtype=np.float64)
    if patch.ndim != 2:
        raise InputError("low_rank_approx expects a matrix")
    if not 1 <= n <= min(patch.shape):
        raise InputError(f"rank {n} out of range for shape {patch.shape}")
    try:
        u, s, vt = np.linalg.svd(patch, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"SVD did not converge: {exc}") from exc
    return (u[:, :n] * s[:n]) @ vt[:n]


@lru_cache(maxsize=8)
def _cached_partition(n, n_bands):
    return PolarBandPartition.build(n, n_bands)


def handcrafted_features(gray_patch, n_bands):
    """The three per-patch descriptors, concatenated [dct, gradient, svd].

    n_bands is the shared per-scale dimension of each component, so the
    result has length 3*n_bands.
    """
    gray_patch = np.asarray(gray_patch, dtype=np.float64)
    part = _cached_partition(gray_patch.shape[0], n_bands)
    f_dct = dct_feature(dct2(gray_patch), part)
    f_grad = gradient_feature(gray_patch, n_bands)
    f_svd = svd_feature(gray_patch, n_bands)
    return np.concatenate([f_dct, f_grad, f_svd])
