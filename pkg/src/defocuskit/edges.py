"""Canny edge detection with a strong/weak split, and multi-scale patch
extraction on the detected edges.

Strong edges (magnitude past the high threshold) yield small patches, weak
edges (past the low threshold only, but connected to a strong chain) yield
large patches. Blurry regions weaken gradients, so their edges tend to land
in the weak class and get the larger spatial context.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import InputError
from .image import Image, luma, save_image
from .kernels import gaussian_blur, sobel_gradients

NONE, WEAK, STRONG = 0, 1, 2


@dataclass
class EdgeMap:
    labels: np.ndarray     # (h, w) uint8 in {NONE, WEAK, STRONG}
    magnitude: np.ndarray  # (h, w) Sobel magnitude of the smoothed image

    def strong_mask(self):
        return self.labels == STRONG

    def weak_mask(self):
        return self.labels == WEAK

    def any_mask(self):
        return self.labels != NONE


@dataclass
class PatchSample:
    x: int
    y: int
    scale: str             # "small" | "large"
    rgb: np.ndarray        # (s, s, 3)
    gray: np.ndarray       # (s, s)
    edge_strength: float


def _shift(m, oy, ox):
    """out[y, x] = m[y + oy, x + ox], zero where that falls outside."""
    h, w = m.shape
    out = np.zeros_like(m)
    y0, y1 = max(0, -oy), min(h, h - oy)
    x0, x1 = max(0, -ox), min(w, w - ox)
    out[y0:y1, x0:x1] = m[y0 + oy:y1 + oy, x0 + ox:x1 + ox]
    return out


def _nonmax_suppress(mag, gx, gy):
    """Keep pixels that are local maxima along the gradient direction.

    Directions are quantized to 4 sectors. Equal-magnitude plateaus keep the
    first pixel along the positive direction (> on one side, >= on the
    other) so an ideal step yields a single-pixel line.
    """
    keep = np.zeros(mag.shape, dtype=bool)
    angle = np.arctan2(gy, gx)
    # sector 0: E-W, 1: NE-SW, 2: N-S, 3: NW-SE
    sector = (np.round(angle / (np.pi / 4.0)).astype(int)) % 4
    offsets = {0: (0, 1), 1: (1, 1), 2: (1, 0), 3: (1, -1)}
    for sec, (oy, ox) in offsets.items():
        cand = (sector == sec) & (mag > 0)
        fwd = _shift(mag, oy, ox)
        bwd = _shift(mag, -oy, -ox)
        keep |= cand & (mag > bwd) & (mag >= fwd)
    return keep


def canny(value, sigma_blur=1.0, t_low=0.08, t_high=0.2, t_mid=0.0):
    """Canny edges of a single-channel image with a two-level output.

    Pixels whose thinned magnitude passes t_high are strong; pixels passing
    only t_low survive as weak when 8-connected to a strong pixel. The
    optional t_mid (off when 0) drops weak pixels below it.
    """
    if isinstance(value, Image):
        if value.channels != 1:
            raise InputError("canny expects the single-channel V image")
        value = value.data
    value = np.asarray(value, dtype=np.float64)
    if value.ndim != 2:
        raise InputError("canny expects a 2-D array")
    if not (0.0 < t_low < t_high):
        raise InputError("need 0 < t_low < t_high")
    if sigma_blur <= 0:
        raise InputError("sigma_blur must be > 0")

    smoothed = gaussian_blur(value, sigma_blur, mode="reflect")
    gx_i, gy_i = sobel_gradients(smoothed)
    h, w = value.shape
    gx = np.zeros((h, w))
    gy = np.zeros((h, w))
    gx[1:-1, 1:-1] = gx_i
    gy[1:-1, 1:-1] = gy_i
    mag = np.hypot(gx, gy)

    thinned = _nonmax_suppress(mag, gx, gy)
    candidates = thinned & (mag >= t_low)
    strong = thinned & (mag >= t_high)

    labels = np.zeros((h, w), dtype=np.uint8)
    if strong.any():
        comp, n_comp = ndimage.label(candidates, structure=np.ones((3, 3), dtype=int))
        keep_ids = np.unique(comp[strong])
        keep = np.isin(comp, keep_ids) & candidates
        labels[keep] = WEAK
        labels[strong] = STRONG
        if t_mid > 0.0:
            labels[(labels == WEAK) & (mag < t_mid)] = NONE
    return EdgeMap(labels=labels, magnitude=mag)


def subsample_edge_pixels(ys, xs, stride, width):
    """Spatial subsampling: the first edge pixel (row-major) of every
    stride x stride cell survives. Unlike a modulo grid this has no blind
    spots for straight lines lying off the grid phase."""
    if stride <= 1 or len(ys) == 0:
        return ys, xs
    cells_x = (width + stride - 1) // stride
    cell_id = (ys // stride) * cells_x + (xs // stride)
    keep = np.unique(cell_id, return_index=True)[1]
    keep.sort()
    return ys[keep], xs[keep]


def extract_patches(img, edges, cfg):
    """One PatchSample per subsampled edge pixel; strong pixels give small
    patches, weak pixels give large ones. Centers too close to the border
    for their patch size are skipped. Deterministic row-major order."""
    if img.channels != 3:
        raise InputError("extract_patches expects a 3-channel image")
    labels = edges.labels
    h, w = labels.shape
    if (h, w) != (img.height, img.width):
        raise InputError("edge map size does not match the image")
    stride = max(1, int(cfg.edge_stride))
    sizes = {STRONG: cfg.patch_small, WEAK: cfg.patch_large}
    data = img.data
    samples = []
    ys, xs = np.nonzero(labels)
    ys, xs = subsample_edge_pixels(ys, xs, stride, w)
    for y, x in zip(ys, xs):
        lab = labels[y, x]
        size = sizes[lab]
        half = size // 2
        if y < half or x < half or y + half >= h or x + half >= w:
            continue
        rgb = data[y - half:y + half + 1, x - half:x + half + 1]
        samples.append(PatchSample(
            x=int(x), y=int(y),
            scale="small" if lab == STRONG else "large",
            rgb=rgb, gray=luma(rgb),
            edge_strength=float(edges.magnitude[y, x]),
        ))
    return samples


def save_edge_map(edges, path):
    """Debug dump: 0 none, 128 weak, 255 strong, as PGM."""
    levels = np.array([0.0, 128.0 / 255.0, 1.0])
    save_image(Image(levels[edges.labels]), path)
