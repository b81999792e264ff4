"""Sparse defocus map construction and filtering.

Classifying the multi-scale edge patches gives a blur sigma and a softmax
confidence at each sampled pixel (the sparse map). A rolling guidance
filter of the input produces the guidance image: repeated joint bilateral
filtering with the previous iterate as guidance removes small-scale texture
while keeping large structure. The confidence-weighted joint bilateral
filter then smooths the sparse values, down-weighting neighbors the
classifier was unsure about.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .datagen import sigma_for_label
from .descriptor import encode_scale
from .errors import InputError
from .features import handcrafted_features
from .kernels import gaussian_blur, joint_bilateral, sparse_prob_bilateral
from .nn.network import pad_to


@dataclass
class SparseDefocusMap:
    sigma: np.ndarray  # (h, w), 0 where unset
    conf: np.ndarray   # (h, w) in [0, 1], 0 where unset
    mask: np.ndarray   # (h, w) bool support

    def __post_init__(self):
        if not (self.sigma.shape == self.conf.shape == self.mask.shape):
            raise InputError("sparse map fields must share one shape")
        on = self.mask
        if np.any(self.sigma[~on] != 0) or np.any(self.conf[~on] != 0):
            raise InputError("values outside the support must be zero")
        if np.any(self.sigma[on] <= 0) or np.any(self.conf[on] <= 0):
            raise InputError("support pixels need positive sigma and confidence")

    @property
    def count(self):
        return int(self.mask.sum())


@dataclass
class BilateralParams:
    sigma_s: float
    sigma_r: float
    sigma_c: float
    radius: int

    @classmethod
    def from_config(cls, cfg):
        return cls(sigma_s=cfg.bf_sigma_s, sigma_r=cfg.bf_sigma_r,
                   sigma_c=cfg.bf_sigma_c, radius=cfg.bf_radius)


def _encode_sample(model, sample, deep):
    hand = handcrafted_features(
        sample.gray,
        model.cfg.bands_small if sample.scale == "small" else model.cfg.bands_large)
    block = np.concatenate([hand, deep])
    return encode_scale(block, sample.scale, model.layout)


def encode_samples(model, samples, threads=1):
    """Encoded descriptors for extracted patches; deep features run batched,
    hand-crafted features optionally fan out over a thread pool (results are
    ordered, so the output never depends on the thread count)."""
    if not samples:
        return np.zeros((0, model.layout.encoded_dim))
    big = model.cfg.patch_large
    padded = np.stack([pad_to(s.rgb, big) for s in samples])
    deep = np.empty((len(samples), model.layout.deep_dim))
    for lo in range(0, len(samples), 256):
        hi = min(lo + 256, len(samples))
        deep[lo:hi] = model.deep_features(padded[lo:hi])
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda pair: _encode_sample(model, *pair),
                                 zip(samples, deep), chunksize=32))
    else:
        rows = [_encode_sample(model, s, d) for s, d in zip(samples, deep)]
    return np.stack(rows)


def classify_to_sparse(model, samples, shape, threads=1):
    """Sparse sigma/confidence maps at the sample centers."""
    sigma = np.zeros(shape)
    conf = np.zeros(shape)
    mask = np.zeros(shape, dtype=bool)
    if samples:
        encoded = encode_samples(model, samples, threads=threads)
        labels, probs = model.classify_batch(encoded)
        for sample, label, prob in zip(samples, labels, probs):
            sigma[sample.y, sample.x] = sigma_for_label(int(label), model.cfg)
            conf[sample.y, sample.x] = float(prob.max())
            mask[sample.y, sample.x] = True
    return SparseDefocusMap(sigma=sigma, conf=conf, mask=mask)


def rolling_guidance(img, sigma_s=3.0, sigma_r=0.1, iterations=4):
    """Rolling guidance filter of a 3-channel image.

    Iteration 1 is a plain Gaussian blur; every further iteration joint-
    bilateral-filters the original input using the previous iterate as the
    guidance. Small-scale structure never re-enters, large edges recover.
    """
    if iterations < 1:
        raise InputError("iterations must be >= 1")
    data = img.data if hasattr(img, "data") else np.asarray(img, dtype=np.float64)
    if data.ndim != 3:
        raise InputError("rolling_guidance expects a 3-channel image")
    radius = max(1, int(np.ceil(3.0 * sigma_s)))
    guide = gaussian_blur(data, sigma_s, mode="reflect")
    for _ in range(1, iterations):
        guide = joint_bilateral(data, guide, sigma_s, sigma_r, radius)
    return guide


def prob_joint_bilateral(smap, guide, params):
    """Confidence-weighted joint bilateral filtering of the sparse map.

    Each support value is replaced by a convex combination of the support
    values in its window, weighted by spatial distance, guidance similarity
    (Frobenius norm over channels) and the neighbors' classifier confidence
    against a perfect score of 1. The support itself is unchanged.
    """
    if smap.count == 0:
        raise InputError("cannot filter an empty sparse map")
    ys, xs = np.nonzero(smap.mask)
    filtered = sparse_prob_bilateral(
        ys, xs, smap.sigma[ys, xs], smap.conf[ys, xs], guide,
        params.sigma_s, params.sigma_r, params.sigma_c, params.radius)
    sigma = np.zeros_like(smap.sigma)
    sigma[ys, xs] = filtered
    return SparseDefocusMap(sigma=sigma, conf=smap.conf.copy(), mask=smap.mask.copy())
