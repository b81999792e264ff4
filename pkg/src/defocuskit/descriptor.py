"""Descriptor concatenation, scale encoding, and the encoded-dataset file.

A per-patch descriptor block is the concatenation
    [dct, gradient, svd, deep]
in that order. The classifier sees one fixed-length encoded vector with
disjoint slots per scale plus one constant slot per scale:

    [ small block | C_small | large block | C_large ]

Exactly one block is populated; the active scale's constant slot is 1 and
everything else is 0. Feeding the constant through the first dense layer
makes that weight column behave like a per-scale bias, which is the point
of the encoding. With the default dimensions (13/25 bands, 20 deep) the
slots are [0..58], 59, [60..154], 155 for a total of 156.

Dataset files: magic "DFKDS001", u32 count, u32 dim, then per record dim
little-endian float32 values followed by one u8 label.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .image import atomic_write

DATASET_MAGIC = b"DFKDS001"

SCALES = ("small", "large")


@dataclass(frozen=True)
class DescriptorLayout:
    small_hand: int   # length of the hand-crafted part at small scale
    large_hand: int
    deep_dim: int

    @classmethod
    def from_config(cls, cfg, deep_dim):
        return cls(small_hand=3 * cfg.bands_small,
                   large_hand=3 * cfg.bands_large,
                   deep_dim=deep_dim)

    @property
    def small_block(self):
        return self.small_hand + self.deep_dim

    @property
    def large_block(self):
        return self.large_hand + self.deep_dim

    @property
    def encoded_dim(self):
        return self.small_block + self.large_block + 2

    def block_dim(self, scale):
        return self.small_block if scale == "small" else self.large_block

    def hand_dim(self, scale):
        return self.small_hand if scale == "small" else self.large_hand

    def block_slice(self, scale):
        """Slot of the full block for a scale inside the encoded vector."""
        if scale == "small":
            return slice(0, self.small_block)
        if scale == "large":
            start = self.small_block + 1
            return slice(start, start + self.large_block)
        raise InputError(f"unknown scale {scale!r}")

    def hand_slice(self, scale):
        blk = self.block_slice(scale)
        return slice(blk.start, blk.start + self.hand_dim(scale))

    def deep_slice(self, scale):
        blk = self.block_slice(scale)
        return slice(blk.stop - self.deep_dim, blk.stop)

    def constant_index(self, scale):
        if scale == "small":
            return self.small_block
        if scale == "large":
            return self.encoded_dim - 1
        raise InputError(f"unknown scale {scale!r}")

    def part_slice(self, scale, part):
        """Slot of one descriptor component ("dct", "grad", "svd", "deep")."""
        if part == "deep":
            return self.deep_slice(scale)
        order = {"dct": 0, "grad": 1, "svd": 2}
        if part not in order:
            raise InputError(f"unknown descriptor part {part!r}")
        width = self.hand_dim(scale) // 3
        start = self.hand_slice(scale).start + order[part] * width
        return slice(start, start + width)


def concat_features(f_dct, f_grad, f_svd, f_deep, layout, scale):
    """Per-patch block [dct, gradient, svd, deep]; dims checked per scale."""
    if scale not in SCALES:
        raise InputError(f"unknown scale {scale!r}")
    hand = layout.hand_dim(scale) // 3
    parts = [np.asarray(p, dtype=np.float64) for p in (f_dct, f_grad, f_svd)]
    for name, part in zip(("dct", "gradient", "svd"), parts):
        if part.shape != (hand,):
            raise InputError(f"{name} feature must have dim {hand} at scale {scale}")
    f_deep = np.asarray(f_deep, dtype=np.float64)
    if f_deep.shape != (layout.deep_dim,):
        raise InputError(f"deep feature must have dim {layout.deep_dim}")
    return np.concatenate(parts + [f_deep])


def encode_scale(block, scale, layout):
    """Place a block into its scale slot; the other scale stays zero."""
    block = np.asarray(block, dtype=np.float64)
    if scale not in SCALES:
        raise InputError(f"unknown scale {scale!r}")
    if block.shape != (layout.block_dim(scale),):
        raise InputError(f"block for scale {scale} must have dim {layout.block_dim(scale)}")
    out = np.zeros(layout.encoded_dim)
    out[layout.block_slice(scale)] = block
    out[layout.constant_index(scale)] = 1.0
    return out


def decode_scale(encoded, layout):
    """Inverse of encode_scale. The constant slots disambiguate the scale."""
    encoded = np.asarray(encoded, dtype=np.float64)
    if encoded.shape != (layout.encoded_dim,):
        raise InputError(f"encoded vector must have dim {layout.encoded_dim}")
    small_c = encoded[layout.constant_index("small")]
    large_c = encoded[layout.constant_index("large")]
    if small_c == 1.0 and large_c == 0.0:
        scale = "small"
    elif large_c == 1.0 and small_c == 0.0:
        scale = "large"
    else:
        raise InputError("encoded vector has no valid constant slot")
    return encoded[layout.block_slice(scale)].copy(), scale


def save_dataset(path, encoded, labels):
    """Write encoded descriptors + u8 labels in the DFKDS001 layout."""
    encoded = np.ascontiguousarray(encoded, dtype="<f4")
    labels = np.asarray(labels)
    if encoded.ndim != 2 or len(labels) != len(encoded):
        raise InputError("need (n, dim) descriptors and n labels")
    if labels.min(initial=0) < 0 or labels.max(initial=0) > 255:
        raise InputError("labels must fit in a byte")
    count, dim = encoded.shape
    parts = [DATASET_MAGIC, struct.pack("<II", count, dim)]
    lab = labels.astype(np.uint8)
    for i in range(count):
        parts.append(encoded[i].tobytes())
        parts.append(lab[i:i + 1].tobytes())
    atomic_write(path, b"".join(parts))


def load_dataset(path):
    try:
        with open(path, "rb") as fh:
            payload = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read dataset {path}: {exc}") from exc
    if payload[:8] != DATASET_MAGIC:
        raise InputError(f"{path}: not a descriptor dataset (bad magic)")
    count, dim = struct.unpack("<II", payload[8:16])
    stride = 4 * dim + 1
    body = payload[16:]
    if len(body) != count * stride:
        raise InputError(f"{path}: truncated dataset")
    raw = np.frombuffer(body, dtype=np.uint8).reshape(count, stride)
    encoded = raw[:, :4 * dim].copy().view("<f4").astype(np.float64)
    labels = raw[:, -1].astype(np.int64)
    return encoded, labels
