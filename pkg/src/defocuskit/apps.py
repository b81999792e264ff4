"""Applications of a dense defocus map: binary blur segmentation,
evaluation metrics and blur magnification.

Thresholding uses tau = alpha * v_max + (1 - alpha) * v_min computed from
the map itself; a pixel is blurry when its value is >= tau (the >= side of
the boundary is used consistently here and in the metrics).
"""

import numpy as np

from .errors import InputError
from .image import Image
from .kernels import varying_gaussian_blur


def threshold_value(defocus_map, alpha):
    if not 0.0 <= alpha <= 1.0:
        raise InputError("alpha must be in [0, 1]")
    vmax = float(np.max(defocus_map))
    vmin = float(np.min(defocus_map))
    return alpha * vmax + (1.0 - alpha) * vmin


def segment(defocus_map, alpha):
    """Blurry-region mask: defocus >= tau(alpha). A constant map is all
    blurry by the >= convention."""
    defocus_map = np.asarray(defocus_map, dtype=np.float64)
    return defocus_map >= threshold_value(defocus_map, alpha)


def accuracy(mask, gt):
    mask = np.asarray(mask, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if mask.shape != gt.shape:
        raise InputError(f"mask {mask.shape} vs ground truth {gt.shape}")
    return float((mask == gt).mean())


def pr_curve(defocus_map, gt, steps, tau_lo, tau_hi):
    """Precision/recall over a uniform tau sweep of [tau_lo, tau_hi].

    Precision is 1 when nothing is marked positive; an all-negative ground
    truth leaves recall undefined and is rejected.
    """
    defocus_map = np.asarray(defocus_map, dtype=np.float64)
    gt = np.asarray(gt, dtype=bool)
    if defocus_map.shape != gt.shape:
        raise InputError("map and ground truth must share a shape")
    if steps < 2:
        raise InputError("steps must be >= 2")
    positives = int(gt.sum())
    if positives == 0:
        raise InputError("ground truth has no positive pixels; recall undefined")
    rows = []
    for tau in np.linspace(tau_lo, tau_hi, steps):
        mask = defocus_map >= tau
        tp = int((mask & gt).sum())
        fp = int((mask & ~gt).sum())
        precision = tp / (tp + fp) if tp + fp > 0 else 1.0
        recall = tp / positives
        rows.append((float(tau), precision, recall))
    return rows


def magnify_blur(img, defocus_map, factor, alpha, tau=None):
    """Amplify background blur: pixels at or past the threshold are
    re-blurred with sigma = factor * defocus(x) (per-pixel Gaussian gather,
    truncated at 3 sigma); foreground pixels are copied through untouched.

    tau defaults to the map-derived segmentation threshold; pass a fixed
    value (e.g. from the sigma ladder) to keep an all-sharp map untouched.
    """
    if factor < 1.0:
        raise InputError("factor must be >= 1")
    defocus_map = np.asarray(defocus_map, dtype=np.float64)
    rgb = img.to_rgb()
    if defocus_map.shape != (rgb.height, rgb.width):
        raise InputError("map size does not match the image")
    if tau is None:
        tau = threshold_value(defocus_map, alpha)
    mask = defocus_map >= tau
    out = varying_gaussian_blur(rgb.data, factor * defocus_map, mask, truncate=3.0)
    return Image(np.clip(out, 0.0, 1.0))
