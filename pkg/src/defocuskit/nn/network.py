"""The defocus model: a small convolutional feature extractor feeding a
three-layer classifier over scale-encoded descriptors.

Feature net (color patch in, flat feature out):
    conv 5x5 -> relu -> maxpool 3/3 -> conv 3x3 -> relu -> maxpool 3/3
Classifier (encoded descriptor in, one logit per blur label out):
    dense -> relu -> dropout -> dense -> relu -> dropout -> dense

Small patches are zero-padded (centered) to the large size before entering
the feature net. Model files carry the magic "DFKT0001", a JSON architecture
header and the parameters as little-endian float32; parameters are snapped
to the float32 grid at init and after training so a save/load round trip
changes nothing.
"""

import dataclasses
import json
import struct

import numpy as np

from ..config import Config
from ..errors import InputError
from ..image import atomic_write
from .layers import (CenterChannels, Conv2D, Dense, Dropout, Flatten,
                     MaxPool2D, ReLU, Sequential, softmax)

MODEL_MAGIC = b"DFKT0001"

_ARCH_KEYS = ("patch_small", "patch_large", "bands_small", "bands_large",
              "conv1_filters", "conv1_size", "conv2_filters", "conv2_size",
              "pool_size", "fc1", "fc2", "dropout", "n_labels",
              "sigma_min", "sigma_inter")


def pad_to(patch, size):
    """Zero-pad a (s, s, c) patch to (size, size, c), centered."""
    s = patch.shape[0]
    if s == size:
        return patch
    if s > size:
        raise InputError(f"patch side {s} exceeds target {size}")
    lo = (size - s) // 2
    out = np.zeros((size, size) + patch.shape[2:], dtype=np.float64)
    out[lo:lo + s, lo:lo + s] = patch
    return out


class DefocusModel:
    def __init__(self, cfg):
        cfg.validate()
        self.cfg = cfg
        self.version = 1
        side = cfg.patch_large
        side = (side - cfg.conv1_size + 1) // cfg.pool_size
        side = (side - cfg.conv2_size + 1) // cfg.pool_size
        if side < 1:
            raise InputError("feature net collapses below 1x1; shrink kernels or pools")
        self.deep_dim = side * side * cfg.conv2_filters
        from ..descriptor import DescriptorLayout
        self.layout = DescriptorLayout.from_config(cfg, self.deep_dim)

        self.feature_net = Sequential([
            CenterChannels(),
            Conv2D(cfg.conv1_size, 3, cfg.conv1_filters),
            ReLU(),
            MaxPool2D(cfg.pool_size),
            Conv2D(cfg.conv2_size, cfg.conv1_filters, cfg.conv2_filters),
            ReLU(),
            MaxPool2D(cfg.pool_size),
            Flatten(),
        ])
        self.classifier = Sequential([
            Dense(self.layout.encoded_dim, cfg.fc1),
            ReLU(),
            Dropout(cfg.dropout),
            Dense(cfg.fc1, cfg.fc2),
            ReLU(),
            Dropout(cfg.dropout),
            Dense(cfg.fc2, cfg.n_labels),
        ])

    def init_params(self, rng):
        """He-style init for every weight matrix; biases start at zero."""
        gen = rng.generator if hasattr(rng, "generator") else rng
        for layer in self.feature_net.layers:
            if isinstance(layer, Conv2D):
                layer.init_params(gen)
        for layer in self.classifier.layers:
            if isinstance(layer, Dense):
                layer.init_params(gen)
        self.quantize()
        return self

    def param_arrays(self):
        arrays = []
        for prefix, net in (("feature", self.feature_net), ("classifier", self.classifier)):
            for i, layer in enumerate(net.layers):
                for name, arr in layer.params():
                    arrays.append((f"{prefix}.{i}.{name}", layer, name, arr))
        return arrays

    def quantize(self):
        """Snap parameters to their float32 representation (file precision)."""
        for _, layer, name, arr in self.param_arrays():
            setattr(layer, name, arr.astype(np.float32).astype(np.float64))

    # ------------------------------------------------------------------
    # inference

    def deep_features(self, patches):
        """(n, large, large, 3) color patches -> (n, deep_dim) features."""
        patches = np.asarray(patches, dtype=np.float64)
        big = self.cfg.patch_large
        if patches.ndim != 4 or patches.shape[1:] != (big, big, 3):
            raise InputError(f"expected (n, {big}, {big}, 3), got {patches.shape}")
        return self.feature_net.forward(patches, train=False)

    def deep_feature(self, patch):
        """Single color patch (small patches are zero-padded first)."""
        patch = pad_to(np.asarray(patch, dtype=np.float64), self.cfg.patch_large)
        return self.deep_features(patch[None])[0]

    def classify_batch(self, encoded):
        encoded = np.asarray(encoded, dtype=np.float64)
        if encoded.ndim != 2 or encoded.shape[1] != self.layout.encoded_dim:
            raise InputError(f"expected (n, {self.layout.encoded_dim}) descriptors")
        probs = softmax(self.classifier.forward(encoded, train=False))
        labels = probs.argmax(axis=1) + 1  # labels are 1-based
        return labels, probs

    def classify(self, encoded):
        labels, probs = self.classify_batch(np.asarray(encoded)[None])
        return int(labels[0]), probs[0]


# ---------------------------------------------------------------------------
# serialization

def save_model(model, path):
    arrays = model.param_arrays()
    header = {
        "version": model.version,
        "arch": {k: getattr(model.cfg, k) for k in _ARCH_KEYS},
        "arrays": [[name, list(arr.shape)] for name, _, _, arr in arrays],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MODEL_MAGIC, struct.pack("<I", len(blob)), blob]
    for _, _, _, arr in arrays:
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    atomic_write(path, b"".join(parts))


def load_model(path):
    try:
        with open(path, "rb") as fh:
            payload = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read model {path}: {exc}") from exc
    if payload[:8] != MODEL_MAGIC:
        raise InputError(f"{path}: not a model file (bad magic)")
    if len(payload) < 12:
        raise InputError(f"{path}: truncated model file")
    (hlen,) = struct.unpack("<I", payload[8:12])
    try:
        header = json.loads(payload[12:12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: corrupt model header: {exc}") from exc
    if header.get("version") != 1:
        raise InputError(f"{path}: unsupported model version {header.get('version')}")

    cfg = dataclasses.replace(Config(), **header["arch"])
    model = DefocusModel(cfg)
    arrays = model.param_arrays()
    declared = header["arrays"]
    if [[name, list(arr.shape)] for name, _, _, arr in arrays] != \
            [[name, list(shape)] for name, shape in declared]:
        raise InputError(f"{path}: architecture does not match parameter table")
    offset = 12 + hlen
    for name, layer, attr, arr in arrays:
        nbytes = arr.size * 4
        chunk = payload[offset:offset + nbytes]
        if len(chunk) != nbytes:
            raise InputError(f"{path}: truncated parameters at {name}")
        values = np.frombuffer(chunk, dtype="<f4").astype(np.float64).reshape(arr.shape)
        setattr(layer, attr, values)
        offset += nbytes
    if offset != len(payload):
        raise InputError(f"{path}: trailing bytes after parameters")
    return model
