"""defocuskit: per-pixel defocus blur estimation from a single image.

Multi-scale patches sampled on image edges are described by spectral,
gradient and singular-value statistics plus a small learned convolutional
feature, classified into a ladder of blur levels, filtered with a
confidence-weighted joint bilateral filter, and propagated to a dense map
through a matting Laplacian.
"""

__version__ = "0.1.0"

from .config import Config
from .errors import InputError, NumericError
from .image import Image, load_image, load_map, save_image, save_map
from .rng import Rng
