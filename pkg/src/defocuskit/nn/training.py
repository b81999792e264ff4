"""Two-stage training of the defocus model with plain SGD.

Stage one connects the feature net straight to the classifier and trains
both on deep-only encodings (hand-crafted slots left at zero). Stage two
freezes the feature net, fills the hand-crafted slots, and fine-tunes the
classifier on the full encodings. A hand-crafted-only classifier can be
trained the same way for feature comparisons.

The update rule is vanilla SGD on the batch-mean gradient: w <- w - lr * g,
b <- b - lr * g, with a parameter-free step decay. There is no momentum or
normalization layer, so two things keep plain SGD effective here: weights
are rescaled at init for unit activation variance on a probe of real data
(calibrate_model), and stage one augments batches with the eight dihedral
patch symmetries. Non-finite gradients or losses abort with a diagnostic.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import NumericError
from .layers import softmax_cross_entropy


def sgd_step(layers, lr):
    """One vanilla SGD update over every parameter of the given layers."""
    if lr < 0:
        raise ValueError("learning rate must be >= 0")
    for layer in layers:
        for (_, param), grad in zip(layer.params(), layer.grads()):
            if not np.all(np.isfinite(grad)):
                raise NumericError("non-finite gradient; training aborted")
            param -= lr * grad


@dataclass
class TrainingData:
    """Stacked, padded training arrays (see stack_records)."""
    patches: np.ndarray       # (n, large, large, 3) float32, smalls zero-padded
    labels0: np.ndarray       # (n,) 0-based labels
    is_small: np.ndarray      # (n,) bool
    hand_encoded: np.ndarray  # (n, dim): hand slots + constant slot, deep zero
    sigma: np.ndarray         # (n,) ground-truth blur per record

    def __len__(self):
        return len(self.labels0)


def stack_records(records, model):
    """Turn a list of datagen records into contiguous training arrays."""
    from ..datagen import sigma_for_label
    from ..nn.network import pad_to

    layout = model.layout
    cfg = model.cfg
    n = len(records)
    patches = np.zeros((n, cfg.patch_large, cfg.patch_large, 3), dtype=np.float32)
    labels0 = np.empty(n, dtype=np.int64)
    is_small = np.zeros(n, dtype=bool)
    hand_encoded = np.zeros((n, layout.encoded_dim))
    sigma = np.empty(n)
    for i, rec in enumerate(records):
        patches[i] = pad_to(rec.patch.astype(np.float64), cfg.patch_large)
        labels0[i] = rec.label - 1
        is_small[i] = rec.scale == "small"
        hand_encoded[i, layout.hand_slice(rec.scale)] = rec.hand
        hand_encoded[i, layout.constant_index(rec.scale)] = 1.0
        sigma[i] = sigma_for_label(rec.label, cfg)
    return TrainingData(patches=patches, labels0=labels0, is_small=is_small,
                        hand_encoded=hand_encoded, sigma=sigma)


def _scatter_deep(layout, is_small, deep, out):
    out[is_small, layout.deep_slice("small")] = deep[is_small]
    out[~is_small, layout.deep_slice("large")] = deep[~is_small]
    return out


def _gather_deep(layout, is_small, denc):
    deep = np.empty((len(is_small), layout.deep_dim))
    deep[is_small] = denc[is_small, layout.deep_slice("small")]
    deep[~is_small] = denc[~is_small, layout.deep_slice("large")]
    return deep


def _base_encoded(layout, is_small):
    """Encodings with only the constant slots set."""
    out = np.zeros((len(is_small), layout.encoded_dim))
    out[is_small, layout.constant_index("small")] = 1.0
    out[~is_small, layout.constant_index("large")] = 1.0
    return out


def deep_encodings(model, data, batch=256):
    """Eval-mode deep-only encodings for every record."""
    layout = model.layout
    enc = _base_encoded(layout, data.is_small)
    for lo in range(0, len(data), batch):
        hi = min(lo + batch, len(data))
        deep = model.deep_features(data.patches[lo:hi].astype(np.float64))
        _scatter_deep(layout, data.is_small[lo:hi], deep, enc[lo:hi])
    return enc


def full_encodings(model, data, batch=256):
    """Hand-crafted + eval-mode deep encodings for every record."""
    enc = data.hand_encoded.copy()
    for lo in range(0, len(data), batch):
        hi = min(lo + batch, len(data))
        deep = model.deep_features(data.patches[lo:hi].astype(np.float64))
        _scatter_deep(model.layout, data.is_small[lo:hi], deep, enc[lo:hi])
    return enc


def _check_loss(loss, stage, epoch):
    if not np.isfinite(loss):
        raise NumericError(f"{stage}: non-finite loss at epoch {epoch}; training aborted")


def _lr_at(lr, epoch, epochs):
    """Step decay: full rate for the first half, then 1/2, then 1/4."""
    if epoch < epochs * 0.5:
        return lr
    if epoch < epochs * 0.75:
        return lr * 0.5
    return lr * 0.25


def _calibrate_dense(model, enc):
    """Rescale the hidden dense layers to unit output std on a probe batch."""
    from .layers import Dense
    dense = [l for l in model.classifier.layers if isinstance(l, Dense)]
    a = enc
    for layer in model.classifier.layers:
        a = layer.forward(a, train=False)
        if isinstance(layer, Dense) and layer is not dense[-1]:
            std = float(a.std())
            if std > 1e-12:
                layer.w /= std
                a = a / std


def calibrate_model(model, data, probe=512, deep=True):
    """Data-calibrated init: after He init, scale each hidden layer's weights
    so its pre-activation std is ~1 on a probe of real inputs. The final
    layer is untouched. Without momentum or normalization layers this is
    what keeps plain SGD effective across the depth; a zero input still
    maps to zero since biases stay zero."""
    from .layers import Conv2D
    n = min(probe, len(data))
    layout = model.layout
    if deep:
        a = data.patches[:n].astype(np.float64)
        for layer in model.feature_net.layers:
            a = layer.forward(a, train=False)
            if isinstance(layer, Conv2D):
                std = float(a.std())
                if std > 1e-12:
                    layer.w /= std
                    a = a / std
        enc = _base_encoded(layout, data.is_small[:n])
        _scatter_deep(layout, data.is_small[:n], a, enc)
    else:
        enc = data.hand_encoded[:n]
    _calibrate_dense(model, enc)
    model.quantize()


def dihedral(x, k):
    """One of the 8 axis-aligned symmetries of a (n, h, w, c) batch."""
    if k >= 4:
        x = x[:, :, ::-1]
    return np.rot90(x, k % 4, axes=(1, 2))


def _augment_batch(x, gen):
    """Random dihedral transform per sample. Gaussian blur is isotropic, so
    the label is invariant; this multiplies the effective corpus eightfold."""
    ks = gen.integers(0, 8, len(x))
    out = np.empty_like(x)
    for k in range(8):
        mask = ks == k
        if mask.any():
            out[mask] = dihedral(x[mask], k)
    return out


def train_stage1(model, data, cfg, gen, epochs=None, lr=None, calibrate=True,
                 augment=True):
    """Joint feature-net + classifier training on deep-only encodings."""
    epochs = cfg.stage1_epochs if epochs is None else epochs
    lr = cfg.learning_rate if lr is None else lr
    if calibrate:
        calibrate_model(model, data, deep=True)
    layout = model.layout
    layers = model.feature_net.param_layers() + model.classifier.param_layers()
    curve = []
    for epoch in range(epochs):
        lr_now = _lr_at(lr, epoch, epochs)
        order = gen.permutation(len(data))
        total, correct = 0.0, 0
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            x = data.patches[idx].astype(np.float64)
            if augment:
                x = _augment_batch(x, gen)
            deep = model.feature_net.forward(x, train=True, rng=gen)
            enc = _base_encoded(layout, data.is_small[idx])
            _scatter_deep(layout, data.is_small[idx], deep, enc)
            logits = model.classifier.forward(enc, train=True, rng=gen)
            loss, dlogits = softmax_cross_entropy(logits, data.labels0[idx])
            _check_loss(loss, "stage1", epoch)
            denc = model.classifier.backward(dlogits)
            model.feature_net.backward(_gather_deep(layout, data.is_small[idx], denc))
            sgd_step(layers, lr_now)
            total += loss * len(idx)
            correct += int((logits.argmax(axis=1) == data.labels0[idx]).sum())
        curve.append((epoch, total / len(data), correct / len(data)))
    model.quantize()
    return curve


def train_classifier(model, enc, labels0, cfg, gen, epochs, lr, stage,
                     calibrate=False):
    if calibrate:
        _calibrate_dense(model, enc[:512])
        model.quantize()
    layers = model.classifier.param_layers()
    curve = []
    for epoch in range(epochs):
        lr_now = _lr_at(lr, epoch, epochs)
        order = gen.permutation(len(labels0))
        total, correct = 0.0, 0
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            logits = model.classifier.forward(enc[idx], train=True, rng=gen)
            loss, dlogits = softmax_cross_entropy(logits, labels0[idx])
            _check_loss(loss, stage, epoch)
            model.classifier.backward(dlogits)
            sgd_step(layers, lr_now)
            total += loss * len(idx)
            correct += int((logits.argmax(axis=1) == labels0[idx]).sum())
        curve.append((epoch, total / len(labels0), correct / len(labels0)))
    model.quantize()
    return curve


def train_stage2(model, data, cfg, gen, epochs=None, lr=None):
    """Fine-tune the classifier on full encodings; feature net frozen."""
    epochs = cfg.stage2_epochs if epochs is None else epochs
    lr = cfg.fine_tune_lr if lr is None else lr
    enc = full_encodings(model, data)
    return train_classifier(model, enc, data.labels0, cfg, gen, epochs, lr, "stage2")


def train_hand_only(model, data, cfg, gen, epochs=None, lr=None):
    """Train the classifier on hand-crafted-only encodings (no feature net)."""
    epochs = cfg.aux_epochs if epochs is None else epochs
    lr = cfg.learning_rate if lr is None else lr
    return train_classifier(model, data.hand_encoded, data.labels0, cfg, gen,
                            epochs, lr, "hand", calibrate=True)


def train(model, data, cfg, rng):
    """The full two-stage schedule. Returns {"stage1": curve, "stage2": curve}."""
    gen = rng.generator if hasattr(rng, "generator") else rng
    return {
        "stage1": train_stage1(model, data, cfg, gen),
        "stage2": train_stage2(model, data, cfg, gen),
    }


def within_tolerance_accuracy(model, enc, data, tolerance=0.15):
    """Fraction of records whose predicted blur is within the tolerance of
    the ground truth (one ladder step at the default spacing)."""
    from ..datagen import sigma_for_label
    correct = 0
    for lo in range(0, len(data), 4096):
        hi = min(lo + 4096, len(data))
        labels, _ = model.classify_batch(enc[lo:hi])
        pred_sigma = np.array([sigma_for_label(int(l), model.cfg) for l in labels])
        correct += int((np.abs(pred_sigma - data.sigma[lo:hi]) <= tolerance + 1e-9).sum())
    return correct / len(data)
