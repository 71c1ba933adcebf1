"""Conv / pool / channel-gate / dense layers with explicit backward passes.

Data layout is NHWC, float64 throughout. Each layer exposes

    init_params(rng)            -> list of parameter arrays
    forward(x, params)          -> (y, cache)
    backward(dy, cache, params) -> (dx, list of parameter gradients)

Parameters are plain numpy arrays owned by the caller, which keeps
flattening into a single checkpoint vector trivial.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import as_strided

from ..rng import Rng


class LayerError(ValueError):
    pass


def _he_uniform(rng: Rng, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    limit = math.sqrt(6.0 / fan_in)
    n = int(np.prod(shape))
    flat = np.array([rng.uniform(-limit, limit) for _ in range(n)], dtype=np.float64)
    return flat.reshape(shape)


class ConvLayer:
    """Valid-padding 2D convolution with optional fused ReLU."""

    def __init__(self, in_shape, out_channels: int, kernel: int, stride: int = 1,
                 activation: str = "relu"):
        h, w, c = in_shape
        if kernel > h or kernel > w:
            raise LayerError(f"kernel {kernel} larger than input {h}x{w}")
        if stride < 1:
            raise LayerError("stride must be >= 1")
        if activation not in ("relu", "linear"):
            raise LayerError(f"unknown activation {activation!r}")
        self.in_shape = tuple(in_shape)
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.activation = activation
        oh = (h - kernel) // stride + 1
        ow = (w - kernel) // stride + 1
        self.out_shape = (oh, ow, out_channels)

    def param_shapes(self) -> list[tuple[int, ...]]:
        k, c, oc = self.kernel, self.in_shape[2], self.out_channels
        return [(k, k, c, oc), (oc,)]

    def init_params(self, rng: Rng) -> list[np.ndarray]:
        k, c, oc = self.kernel, self.in_shape[2], self.out_channels
        weight = _he_uniform(rng, (k, k, c, oc), fan_in=k * k * c)
        return [weight, np.zeros(oc, dtype=np.float64)]

    def _windows(self, x: np.ndarray) -> np.ndarray:
        n = x.shape[0]
        oh, ow, _ = self.out_shape
        k, s = self.kernel, self.stride
        sn, sh, sw, sc = x.strides
        return as_strided(
            x,
            shape=(n, oh, ow, k, k, x.shape[3]),
            strides=(sn, sh * s, sw * s, sh, sw, sc),
            writeable=False,
        )

    def forward(self, x, params):
        weight, bias = params
        windows = self._windows(x)
        # (N,OH,OW,K,K,C) . (K,K,C,O) over the last three axes
        z = np.tensordot(windows, weight, axes=([3, 4, 5], [0, 1, 2])) + bias
        if self.activation == "relu":
            y = np.maximum(z, 0.0)
            return y, (x, windows, z)
        return z, (x, windows, None)

    def backward(self, dy, cache, params):
        weight, _ = params
        x, windows, z = cache
        dz = dy * (z > 0.0) if self.activation == "relu" else dy
        db = dz.sum(axis=(0, 1, 2))
        dw = np.tensordot(windows, dz, axes=([0, 1, 2], [0, 1, 2]))
        dx = np.zeros_like(x)
        oh, ow, _ = self.out_shape
        s, k = self.stride, self.kernel
        for kh in range(k):
            for kw in range(k):
                # dz (N,OH,OW,OC) x weight[kh,kw] (C,OC) -> (N,OH,OW,C)
                contrib = dz @ weight[kh, kw].T
                dx[:, kh : kh + s * oh : s, kw : kw + s * ow : s, :] += contrib
        return dx, [dw, db]


class MaxPoolLayer:
    """Non-overlapping max pooling (stride = window), floor semantics."""

    def __init__(self, in_shape, window: int):
        h, w, c = in_shape
        if window < 1 or window > min(h, w):
            raise LayerError(f"pool window {window} invalid for input {h}x{w}")
        self.in_shape = tuple(in_shape)
        self.window = window
        self.out_shape = (h // window, w // window, c)

    def param_shapes(self) -> list[tuple[int, ...]]:
        return []

    def init_params(self, rng: Rng) -> list[np.ndarray]:
        return []

    def forward(self, x, params):
        n = x.shape[0]
        oh, ow, c = self.out_shape
        w = self.window
        cropped = x[:, : oh * w, : ow * w, :]
        tiles = (
            cropped.reshape(n, oh, w, ow, w, c)
            .transpose(0, 1, 3, 2, 4, 5)
            .reshape(n, oh, ow, w * w, c)
        )
        idx = tiles.argmax(axis=3)
        y = np.take_along_axis(tiles, idx[:, :, :, None, :], axis=3)[:, :, :, 0, :]
        return y, (x.shape, idx)

    def backward(self, dy, cache, params):
        x_shape, idx = cache
        n = x_shape[0]
        oh, ow, c = self.out_shape
        w = self.window
        dtiles = np.zeros((n, oh, ow, w * w, c), dtype=np.float64)
        np.put_along_axis(dtiles, idx[:, :, :, None, :], dy[:, :, :, None, :], axis=3)
        dx = np.zeros(x_shape, dtype=np.float64)
        dview = dtiles.reshape(n, oh, ow, w, w, c).transpose(0, 1, 3, 2, 4, 5)
        dx[:, : oh * w, : ow * w, :] = dview.reshape(n, oh * w, ow * w, c)
        return dx, []


class SEGateLayer:
    """Channel gate: squeeze (global mean) -> bottleneck MLP -> sigmoid scale."""

    def __init__(self, in_shape, reduction_ratio: int):
        h, w, c = in_shape
        if reduction_ratio < 1 or c % reduction_ratio != 0:
            raise LayerError(
                f"reduction ratio {reduction_ratio} must divide channel count {c}"
            )
        self.in_shape = tuple(in_shape)
        self.reduction = reduction_ratio
        self.hidden = c // reduction_ratio
        self.out_shape = tuple(in_shape)

    def param_shapes(self) -> list[tuple[int, ...]]:
        c, hid = self.in_shape[2], self.hidden
        return [(c, hid), (hid,), (hid, c), (c,)]

    def init_params(self, rng: Rng) -> list[np.ndarray]:
        c, hid = self.in_shape[2], self.hidden
        w1 = _he_uniform(rng, (c, hid), fan_in=c)
        w2 = _he_uniform(rng, (hid, c), fan_in=hid)
        return [w1, np.zeros(hid), w2, np.zeros(c)]

    def forward(self, x, params):
        w1, b1, w2, b2 = params
        s = x.mean(axis=(1, 2))                       # (N, C)
        a1 = s @ w1 + b1
        h = np.maximum(a1, 0.0)
        a2 = h @ w2 + b2
        g = 1.0 / (1.0 + np.exp(-a2))                 # (N, C)
        y = x * g[:, None, None, :]
        return y, (x, s, a1, h, g)

    def backward(self, dy, cache, params):
        w1, _, w2, _ = params
        x, s, a1, h, g = cache
        hw = x.shape[1] * x.shape[2]
        dx = dy * g[:, None, None, :]
        dg = (dy * x).sum(axis=(1, 2))                # (N, C)
        da2 = dg * g * (1.0 - g)
        dw2 = h.T @ da2
        db2 = da2.sum(axis=0)
        dh = da2 @ w2.T
        da1 = dh * (a1 > 0.0)
        dw1 = s.T @ da1
        db1 = da1.sum(axis=0)
        ds = da1 @ w1.T                               # (N, C)
        dx += ds[:, None, None, :] / hw
        return dx, [dw1, db1, dw2, db2]


class DenseLayer:
    """Linear layer over the flattened input; produces logits when last."""

    def __init__(self, in_shape, units: int):
        self.in_shape = tuple(in_shape) if not isinstance(in_shape, int) else (in_shape,)
        self.in_size = int(np.prod(self.in_shape))
        self.units = units
        self.out_shape = (units,)

    def param_shapes(self) -> list[tuple[int, ...]]:
        return [(self.in_size, self.units), (self.units,)]

    def init_params(self, rng: Rng) -> list[np.ndarray]:
        w = _he_uniform(rng, (self.in_size, self.units), fan_in=self.in_size)
        return [w, np.zeros(self.units, dtype=np.float64)]

    def forward(self, x, params):
        w, b = params
        flat = x.reshape(x.shape[0], -1)
        return flat @ w + b, (x.shape, flat)

    def backward(self, dy, cache, params):
        w, _ = params
        x_shape, flat = cache
        dw = flat.T @ dy
        db = dy.sum(axis=0)
        dx = (dy @ w.T).reshape(x_shape)
        return dx, [dw, db]
