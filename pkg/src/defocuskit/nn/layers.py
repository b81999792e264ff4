"""From-scratch network layers over numpy arrays.

Tensors are plain float64 ndarrays, batch-first: (n, h, w, c) for spatial
layers and (n, d) for dense ones. Each layer caches what its backward pass
needs; backward returns the input gradient and stores parameter gradients
on the layer. Convolutions run stride 1 with valid padding; max pooling
requires size == stride and routes gradients to the first argmax cell of
each window.
"""

import numpy as np

from ..errors import InputError
from ..kernels import conv2d_forward, conv2d_backward


class Layer:
    """Base: stateless unless a subclass defines params()."""

    def params(self):
        return []

    def grads(self):
        return []

    def forward(self, x, train=False, rng=None):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError


class Conv2D(Layer):
    def __init__(self, kernel_size, in_channels, out_channels):
        self.kernel_size = kernel_size
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.w = np.zeros((kernel_size, kernel_size, in_channels, out_channels))
        self.b = np.zeros(out_channels)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._x = None

    def init_params(self, rng):
        fan_in = self.kernel_size * self.kernel_size * self.in_channels
        self.w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=self.w.shape)
        self.b = np.zeros(self.out_channels)

    def params(self):
        return [("w", self.w), ("b", self.b)]

    def grads(self):
        return [self.dw, self.db]

    def forward(self, x, train=False, rng=None):
        if x.ndim != 4 or x.shape[3] != self.in_channels:
            raise InputError(f"conv expects (n, h, w, {self.in_channels}), got {x.shape}")
        if x.shape[1] < self.kernel_size or x.shape[2] < self.kernel_size:
            raise InputError("input smaller than the convolution kernel")
        self._x = x
        return conv2d_forward(x, self.w, self.b)

    def backward(self, dout):
        dx, self.dw, self.db = conv2d_backward(self._x, self.w, dout)
        return dx


class ReLU(Layer):
    def forward(self, x, train=False, rng=None):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dout):
        return np.where(self._mask, dout, 0.0)


class CenterChannels(Layer):
    """Subtract each sample's per-channel spatial mean.

    A patch's mean color carries content, not blur; removing it up front
    keeps the convolution gradients pointed at structure instead of
    brightness. A zero input stays exactly zero.
    """

    def forward(self, x, train=False, rng=None):
        return x - x.mean(axis=(1, 2), keepdims=True)

    def backward(self, dout):
        return dout - dout.mean(axis=(1, 2), keepdims=True)


class MaxPool2D(Layer):
    """Non-overlapping max pooling; trailing rows/cols that do not fill a
    window are dropped. Ties go to the first cell in window scan order."""

    def __init__(self, size=3):
        self.size = size

    def forward(self, x, train=False, rng=None):
        s = self.size
        n, h, w, c = x.shape
        ho, wo = h // s, w // s
        if ho == 0 or wo == 0:
            raise InputError("input smaller than the pooling window")
        self._in_shape = x.shape
        win = x[:, :ho * s, :wo * s, :]
        win = win.reshape(n, ho, s, wo, s, c).transpose(0, 1, 3, 5, 2, 4)
        win = win.reshape(n, ho, wo, c, s * s)
        self._argmax = win.argmax(axis=4)
        return np.take_along_axis(win, self._argmax[..., None], axis=4)[..., 0]

    def backward(self, dout):
        s = self.size
        n, h, w, c = self._in_shape
        ho, wo = h // s, w // s
        dwin = np.zeros((n, ho, wo, c, s * s))
        np.put_along_axis(dwin, self._argmax[..., None], dout[..., None], axis=4)
        dwin = dwin.reshape(n, ho, wo, c, s, s).transpose(0, 1, 4, 2, 5, 3)
        dx = np.zeros(self._in_shape)
        dx[:, :ho * s, :wo * s, :] = dwin.reshape(n, ho * s, wo * s, c)
        return dx


class Flatten(Layer):
    def forward(self, x, train=False, rng=None):
        self._in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._in_shape)


class Dense(Layer):
    def __init__(self, in_dim, out_dim):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.w = np.zeros((in_dim, out_dim))
        self.b = np.zeros(out_dim)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)

    def init_params(self, rng):
        self.w = rng.normal(0.0, np.sqrt(2.0 / self.in_dim),
                            size=(self.in_dim, self.out_dim))
        self.b = np.zeros(self.out_dim)

    def params(self):
        return [("w", self.w), ("b", self.b)]

    def grads(self):
        return [self.dw, self.db]

    def forward(self, x, train=False, rng=None):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise InputError(f"dense expects (n, {self.in_dim}), got {x.shape}")
        self._x = x
        return x @ self.w + self.b

    def backward(self, dout):
        self.dw = self._x.T @ dout
        self.db = dout.sum(axis=0)
        return dout @ self.w.T


class Dropout(Layer):
    """Inverted dropout: train-time activations are divided by the keep
    probability so eval mode is the identity."""

    def __init__(self, rate=0.5):
        if not 0.0 <= rate < 1.0:
            raise InputError("dropout rate must be in [0, 1)")
        self.rate = rate
        self._scale = None

    def forward(self, x, train=False, rng=None):
        if not train or self.rate == 0.0:
            self._scale = None
            return x
        if rng is None:
            raise InputError("train-mode dropout needs an rng")
        keep = rng.random(x.shape) >= self.rate
        self._scale = keep / (1.0 - self.rate)
        return x * self._scale

    def backward(self, dout):
        if self._scale is None:
            return dout
        return dout * self._scale


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy of integer labels (0-based); returns (loss, dlogits)."""
    probs = softmax(logits)
    n = logits.shape[0]
    picked = probs[np.arange(n), labels]
    loss = float(-np.log(np.maximum(picked, 1e-300)).mean())
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    return loss, dlogits / n


class Sequential:
    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x, train=False, rng=None):
        for layer in self.layers:
            x = layer.forward(x, train=train, rng=rng)
        return x

    def backward(self, dout):
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def param_layers(self):
        return [layer for layer in self.layers if layer.params()]
