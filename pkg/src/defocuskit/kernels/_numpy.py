"""Numpy implementations of the hot kernels.

These are the reference implementations; the compiled extension in
_native.pyx mirrors the exact same signatures and semantics. Whole-array
tricks (offset loops, sliding windows, BLAS contractions) keep them usable
on their own when the extension is not built.
"""

import math

import numpy as np
from scipy.ndimage import convolve1d


# ---------------------------------------------------------------------------
# Gaussian helpers

def gaussian_taps(sigma):
    """Normalized 1-D Gaussian taps truncated at radius ceil(3*sigma)."""
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-0.5 * (x / sigma) ** 2)
    return taps / taps.sum()


def gaussian_blur(arr, sigma, mode="reflect"):
    """Separable Gaussian blur of a 2-D or (h, w, c) array, same shape out."""
    taps = gaussian_taps(sigma)
    out = convolve1d(np.asarray(arr, dtype=np.float64), taps, axis=0, mode=mode)
    return convolve1d(out, taps, axis=1, mode=mode)


def sobel_gradients(arr):
    """Sobel x/y gradients on the valid interior of a 2-D array.

    Returns (gx, gy), each of shape (h-2, w-2). x runs along columns.
    """
    p = np.asarray(arr, dtype=np.float64)
    gx = (p[:-2, 2:] + 2.0 * p[1:-1, 2:] + p[2:, 2:]
          - p[:-2, :-2] - 2.0 * p[1:-1, :-2] - p[2:, :-2])
    gy = (p[2:, :-2] + 2.0 * p[2:, 1:-1] + p[2:, 2:]
          - p[:-2, :-2] - 2.0 * p[:-2, 1:-1] - p[:-2, 2:])
    return gx, gy


# ---------------------------------------------------------------------------
# convolution layers (batched, valid padding, stride 1)

def conv2d_forward(x, w, b):
    """x: (n, h, w, ci), w: (kh, kw, ci, co), b: (co) -> (n, ho, wo, co).

    Shift-and-matmul: one BLAS contraction per kernel tap, which avoids
    materializing the full im2col tensor.
    """
    n, h, wd, _ = x.shape
    kh, kw, _, co = w.shape
    ho, wo = h - kh + 1, wd - kw + 1
    out = np.empty((n, ho, wo, co))
    out[:] = b
    for u in range(kh):
        for v in range(kw):
            out += x[:, u:u + ho, v:v + wo, :] @ w[u, v]
    return out


def conv2d_backward(x, w, dy):
    """Gradients of conv2d_forward. Returns (dx, dw, db)."""
    n, h, wd, ci = x.shape
    kh, kw, _, co = w.shape
    ho, wo = h - kh + 1, wd - kw + 1
    db = dy.sum(axis=(0, 1, 2))
    dw = np.empty_like(w)
    dx = np.zeros_like(x)
    dy_flat = dy.reshape(-1, co)
    for u in range(kh):
        for v in range(kw):
            patch = x[:, u:u + ho, v:v + wo, :].reshape(-1, ci)
            dw[u, v] = patch.T @ dy_flat
            dx[:, u:u + ho, v:v + wo, :] += dy @ w[u, v].T
    return dx, dw, db


# ---------------------------------------------------------------------------
# bilateral filtering

def joint_bilateral(data, guide, sigma_s, sigma_r, radius):
    """Joint bilateral filter of an (h, w, c) image with (h, w, c) guidance.

    Spatial weight exp(-d2 / 2*sigma_s^2), range weight on the squared
    Frobenius norm of the guidance difference; symmetric (edge-repeating)
    boundary handling, square window of the given radius.
    """
    data = np.asarray(data, dtype=np.float64)
    guide = np.asarray(guide, dtype=np.float64)
    r = int(radius)
    h, w = data.shape[:2]
    dp = np.pad(data, ((r, r), (r, r), (0, 0)), mode="symmetric")
    gp = np.pad(guide, ((r, r), (r, r), (0, 0)), mode="symmetric")
    inv_s = -0.5 / (sigma_s * sigma_s)
    inv_r = -0.5 / (sigma_r * sigma_r)
    num = np.zeros_like(data)
    den = np.zeros((h, w))
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            ws = math.exp((dy * dy + dx * dx) * inv_s)
            gwin = gp[r + dy:r + dy + h, r + dx:r + dx + w]
            diff = gwin - guide
            wgt = ws * np.exp(np.einsum("ijc,ijc->ij", diff, diff) * inv_r)
            num += wgt[:, :, None] * dp[r + dy:r + dy + h, r + dx:r + dx + w]
            den += wgt
    return num / den[:, :, None]


def sparse_prob_bilateral(ys, xs, values, conf, guide, sigma_s, sigma_r, sigma_c, radius):
    """Confidence-weighted joint bilateral filter on sparse support pixels.

    ys/xs/values/conf describe the support; neighbors are the support pixels
    inside a square window of the given radius (the center included). The
    output is the filtered value per support pixel, in input order. If the
    total weight underflows the input value is passed through.
    """
    guide = np.asarray(guide, dtype=np.float64)
    h, w = guide.shape[:2]
    vmap = np.zeros((h, w))
    cmap = np.zeros((h, w))
    smask = np.zeros((h, w), dtype=bool)
    vmap[ys, xs] = values
    cmap[ys, xs] = conf
    smask[ys, xs] = True
    inv_s = -0.5 / (sigma_s * sigma_s)
    inv_r = -0.5 / (sigma_r * sigma_r)
    inv_c = -0.5 / (sigma_c * sigma_c)
    r = int(radius)
    out = np.empty(len(ys), dtype=np.float64)
    for i in range(len(ys)):
        y = int(ys[i])
        x = int(xs[i])
        y0, y1 = max(0, y - r), min(h, y + r + 1)
        x0, x1 = max(0, x - r), min(w, x + r + 1)
        ly, lx = np.nonzero(smask[y0:y1, x0:x1])
        py = ly + y0
        px = lx + x0
        d2 = (py - y).astype(np.float64) ** 2 + (px - x).astype(np.float64) ** 2
        gdiff = guide[py, px] - guide[y, x]
        expo = (d2 * inv_s
                + np.einsum("nc,nc->n", gdiff, gdiff) * inv_r
                + (1.0 - cmap[py, px]) ** 2 * inv_c)
        wgt = np.exp(expo)
        total = wgt.sum()
        if total < 1e-300:
            out[i] = vmap[y, x]
        else:
            out[i] = float(wgt @ vmap[py, px]) / total
    return out


def varying_gaussian_blur(img, sigma_map, mask, truncate=3.0):
    """Per-pixel Gaussian gather: masked pixels are re-blurred with their own
    sigma (kernel truncated at truncate*sigma); unmasked pixels pass through
    untouched. img is (h, w, c); symmetric boundary handling."""
    img = np.asarray(img, dtype=np.float64)
    sigma_map = np.asarray(sigma_map, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    out = img.copy()
    if not mask.any():
        return out
    h, w = sigma_map.shape
    rad = int(math.ceil(truncate * float(sigma_map[mask].max())))
    if rad == 0:
        return out
    pad = np.pad(img, ((rad, rad), (rad, rad), (0, 0)), mode="symmetric")
    s2 = np.maximum(sigma_map, 1e-12) ** 2
    inv = np.where(mask, -0.5 / s2, 0.0)
    cut2 = (truncate * sigma_map) ** 2
    num = np.zeros_like(img)
    den = np.zeros((h, w))
    for dy in range(-rad, rad + 1):
        for dx in range(-rad, rad + 1):
            d2 = float(dy * dy + dx * dx)
            active = mask & (d2 <= cut2)
            if not active.any():
                continue
            wgt = np.where(active, np.exp(d2 * inv), 0.0)
            num += wgt[:, :, None] * pad[rad + dy:rad + dy + h, rad + dx:rad + dx + w]
            den += wgt
    filled = mask & (den > 0)
    out[filled] = num[filled] / den[filled][:, None]
    return out
