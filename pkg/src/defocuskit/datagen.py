"""Synthetic training data: sharp edge patches blurred down a sigma ladder.

Sharp patches are sampled at strong edges of in-focus source images. Each
sharp patch yields one record per label, blurred with that label's sigma,
so classes are balanced by construction. The label-to-sigma ladder is
    sigma_l = sigma_min + (l - 1) * sigma_inter,   l in [1, L],
and the sharp class itself is the bottom of the ladder (sigma_1), not an
unblurred patch. Blur is applied to an enlarged crop and center-cropped so
no boundary extension leaks into a training patch.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .edges import canny, subsample_edge_pixels, STRONG
from .errors import InputError
from .features import handcrafted_features
from .image import luma, value_channel
from .kernels import gaussian_taps

BORDER_TRUNCATE = 3.0


@dataclass
class BlurKernelSpec:
    """Sampled, normalized 2-D Gaussian kernel with radius ceil(3*sigma)."""
    sigma: float
    radius: int
    taps: np.ndarray    # 1-D separable taps
    kernel: np.ndarray  # full 2-D kernel (outer product)

    @classmethod
    def build(cls, sigma):
        if sigma <= 0:
            raise InputError("blur sigma must be > 0")
        taps = gaussian_taps(sigma)
        return cls(sigma=float(sigma), radius=(len(taps) - 1) // 2,
                   taps=taps, kernel=np.outer(taps, taps))


def sigma_for_label(label, cfg):
    """Blur sigma of a 1-based class label."""
    if not 1 <= label <= cfg.n_labels:
        raise InputError(f"label {label} outside [1, {cfg.n_labels}]")
    return cfg.sigma_min + (label - 1) * cfg.sigma_inter


def blur_patch(source, sigma):
    """Valid-region convolution with the sampled Gaussian; the output side
    shrinks by twice the kernel radius. Channels are filtered independently."""
    spec = BlurKernelSpec.build(sigma)
    source = np.asarray(source, dtype=np.float64)
    r = spec.radius
    if source.shape[0] <= 2 * r or source.shape[1] <= 2 * r:
        raise InputError("source patch too small for the requested blur")
    moved = source if source.ndim == 2 else np.moveaxis(source, 2, 0)
    from scipy.ndimage import convolve1d
    out = convolve1d(moved, spec.taps, axis=-2, mode="constant")
    out = convolve1d(out, spec.taps, axis=-1, mode="constant")
    out = out[..., r:-r, r:-r]
    if source.ndim == 3:
        out = np.moveaxis(out, 0, 2)
    return np.clip(out, 0.0, 1.0)


@dataclass
class TrainRecord:
    patch: np.ndarray   # (s, s, 3) float32, blurred with sigma(label)
    label: int          # 1-based ladder label
    scale: str          # "small" | "large"
    hand: np.ndarray    # hand-crafted features of the grayscale patch
    image_id: int
    x: int
    y: int


def _sharp_centers(img, cfg):
    """Strong-edge pixels after spatial subsampling."""
    edges = canny(value_channel(img), cfg.canny_sigma, cfg.canny_low,
                  cfg.canny_high, cfg.canny_mid)
    ys, xs = np.nonzero(edges.labels == STRONG)
    return subsample_edge_pixels(ys, xs, max(1, cfg.edge_stride), img.width)


def build_training_set(images, cfg, rng):
    """Labeled multi-scale records from a list of in-focus source images.

    Scales alternate over the shuffled centers so both patch sizes are
    represented evenly. Centers too close to the border for the enlarged
    crop of their scale are skipped; if the corpus yields fewer sharp
    patches than max_train_patches a warning is emitted.
    """
    sigma_max = sigma_for_label(cfg.n_labels, cfg)
    pad = int(math.ceil(BORDER_TRUNCATE * sigma_max))
    gen = rng.generator if hasattr(rng, "generator") else rng

    candidates = []
    for image_id, img in enumerate(images):
        if img.channels != 3:
            img = img.to_rgb()
        ys, xs = _sharp_centers(img, cfg)
        order = gen.permutation(len(ys))
        for rank, j in enumerate(order):
            scale = "small" if rank % 2 == 0 else "large"
            size = cfg.patch_small if scale == "small" else cfg.patch_large
            half = size // 2 + pad
            y, x = int(ys[j]), int(xs[j])
            if y < half or x < half or y + half >= img.height or x + half >= img.width:
                continue
            candidates.append((image_id, img, y, x, scale, size))

    gen.shuffle(candidates)
    if len(candidates) > cfg.max_train_patches:
        candidates = candidates[:cfg.max_train_patches]
    elif 0 < len(candidates) < cfg.max_train_patches:
        warnings.warn(f"only {len(candidates)} sharp patches available "
                      f"(wanted {cfg.max_train_patches}); using all of them")
    if not candidates:
        return []

    bands = {"small": cfg.bands_small, "large": cfg.bands_large}
    records = []
    for image_id, img, y, x, scale, size in candidates:
        half = size // 2 + pad
        crop = img.data[y - half:y + half + 1, x - half:x + half + 1]
        for label in range(1, cfg.n_labels + 1):
            blurred = blur_patch(crop, sigma_for_label(label, cfg))
            excess = (blurred.shape[0] - size) // 2
            patch = blurred[excess:excess + size, excess:excess + size]
            records.append(TrainRecord(
                patch=patch.astype(np.float32), label=label, scale=scale,
                hand=handcrafted_features(luma(patch), bands[scale]),
                image_id=image_id, x=x, y=y))
    return records


def split_by_image(records, holdout_fraction, gen):
    """Train/test split along source images, so no scene content leaks."""
    ids = sorted({rec.image_id for rec in records})
    n_hold = max(1, int(round(holdout_fraction * len(ids))))
    held = set(np.asarray(ids)[gen.permutation(len(ids))[:n_hold]].tolist())
    train = [rec for rec in records if rec.image_id not in held]
    test = [rec for rec in records if rec.image_id in held]
    return train, test


def manifest_rows(records):
    """CSV-ready rows (image, center_x, center_y, scale, label)."""
    return [(rec.image_id, rec.x, rec.y, rec.scale, rec.label) for rec in records]
