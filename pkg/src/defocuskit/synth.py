"""Procedural test scenes: textured images with known blur layout.

Everything here is deterministic given the generator passed in, so demo
corpora and evaluation scenes are reproducible from the config seed alone.
"""

import numpy as np

from .image import Image
from .kernels import gaussian_blur


def texture_image(gen, height, width, n_shapes=28, noise=0.015, palette_span=1.0,
                  base=None):
    """Piecewise-flat color image: random rectangles and ellipses over a
    shaded base, plus faint pixel noise. Shape boundaries give the strong
    edges the patch sampler needs. base fixes the palette center."""
    if base is None:
        base = gen.uniform(0.15, 0.85, size=3)
    ramp_dir = gen.uniform(-1.0, 1.0, size=2)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    ramp = (ramp_dir[0] * yy / height + ramp_dir[1] * xx / width) * 0.12
    img = np.clip(base[None, None, :] + ramp[:, :, None], 0.05, 0.95) * np.ones((1, 1, 3))

    for _ in range(n_shapes):
        color = np.clip(base + gen.uniform(-0.5, 0.5, size=3) * palette_span, 0.02, 0.98)
        kind = gen.random()
        cy = gen.uniform(0, height)
        cx = gen.uniform(0, width)
        ry = gen.uniform(4, height / 4)
        rx = gen.uniform(4, width / 4)
        if kind < 0.5:
            y0, y1 = int(max(0, cy - ry)), int(min(height, cy + ry))
            x0, x1 = int(max(0, cx - rx)), int(min(width, cx + rx))
            img[y0:y1, x0:x1] = color
        else:
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
            img[mask] = color
    img += gen.normal(0.0, noise, size=img.shape)
    return Image(np.clip(img, 0.0, 1.0))


def distinct_bases(gen, min_dist=0.55):
    """Two palette centers far enough apart that content looks different."""
    base_a = gen.uniform(0.15, 0.85, size=3)
    for _ in range(64):
        base_b = gen.uniform(0.15, 0.85, size=3)
        if np.linalg.norm(base_a - base_b) >= min_dist:
            return base_a, base_b
    return base_a, np.clip(1.0 - base_a, 0.15, 0.85)


def half_blur_scene(gen, height, width, sigma):
    """Left half sharp texture, right half a different texture blurred with
    the given sigma, mimicking in-focus foreground against out-of-focus
    background content.

    Returns (image, gt_mask) where gt_mask is True on the blurry half.
    """
    base_a, base_b = distinct_bases(gen)
    sharp = texture_image(gen, height, width, base=base_a)
    far = texture_image(gen, height, width, base=base_b, palette_span=0.7)
    blurred = gaussian_blur(far.data, sigma, mode="reflect")
    data = sharp.data.copy()
    half = width // 2
    data[:, half:] = blurred[:, half:]
    gt = np.zeros((height, width), dtype=bool)
    gt[:, half:] = True
    return Image(data), gt


def flat_region_scene(gen, height, width, sigma, region_frac=0.5,
                      wave_amp=0.012, wave_period=10.0):
    """Textured scene with a central near-homogeneous region whose true blur
    is sigma. The region carries only faint smooth waves, then gets blurred,
    so its interior stays below the edge detector's thresholds while still
    showing the spectral signature of heavy blur.

    Returns (image, region_mask).
    """
    base_a, base_b = distinct_bases(gen)
    img = texture_image(gen, height, width, base=base_a).data.copy()
    ry = int(height * region_frac / 2)
    rx = int(width * region_frac / 2)
    cy, cx = height // 2, width // 2
    y0, y1 = cy - ry, cy + ry
    x0, x1 = cx - rx, cx + rx

    yy, xx = np.mgrid[y0:y1, x0:x1].astype(np.float64)
    base = np.clip(base_b, 0.25, 0.75)
    ph = gen.uniform(0, 2 * np.pi, size=2)
    waves = (np.sin(2 * np.pi * xx / wave_period + ph[0])
             + np.sin(2 * np.pi * yy / wave_period + ph[1]))
    content = np.clip(base[None, None, :] + (wave_amp * waves)[:, :, None], 0.0, 1.0)
    img[y0:y1, x0:x1] = gaussian_blur(content, sigma, mode="reflect")

    region = np.zeros((height, width), dtype=bool)
    region[y0:y1, x0:x1] = True
    return Image(np.clip(img, 0.0, 1.0)), region


def corpus(gen, n_images, size):
    """Sharp training corpus for the demo."""
    return [texture_image(gen, size, size) for _ in range(n_images)]
