"""Layer kinds with hand-written backward passes.

Every layer works on float64 arrays in NCHW layout. ``forward`` returns
``(y, cache)`` and ``backward(cache, gy)`` returns ``(gx, grads)`` where
``grads`` lines up with ``params``. Layers keep no per-call state, so one
layer can appear several times on a tape.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeMismatch


def _windows(xp, k, s):
    # (N, C, Ho, Wo, k, k) view of a padded input
    return sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s]


def _gain(activation, slope=0.2):
    return {
        "relu": math.sqrt(2.0),
        "leaky_relu": math.sqrt(2.0 / (1.0 + slope ** 2)),
        "tanh": 5.0 / 3.0,
        "sigmoid": 1.0,
        None: 1.0,
    }[activation]


class Layer:
    kind = "layer"
    param_names: tuple = ()

    def __init__(self):
        self.params = []

    def hyper(self) -> dict:
        return {}

    def spec(self) -> dict:
        return {"kind": self.kind, **self.hyper()}

    def out_shape(self, shape):
        return shape

    def forward(self, x):
        raise NotImplementedError

    def backward(self, cache, gy):
        raise NotImplementedError

    def __repr__(self):
        args = ", ".join(f"{k}={v}" for k, v in self.hyper().items())
        return f"{type(self).__name__}({args})"


class Conv2d(Layer):
    kind = "conv2d"
    param_names = ("weight", "bias")

    def __init__(self, in_channels, out_channels, kernel, stride=1, padding=0,
                 rng=None, gain=1.0):
        super().__init__()
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel, self.stride, self.padding = kernel, stride, padding
        rng = rng if rng is not None else np.random.default_rng(0)
        std = gain / math.sqrt(in_channels * kernel * kernel)
        self.params = [rng.normal(0.0, std, (out_channels, in_channels, kernel, kernel)),
                       np.zeros(out_channels)]

    def hyper(self):
        return {"in_channels": self.in_channels, "out_channels": self.out_channels,
                "kernel": self.kernel, "stride": self.stride, "padding": self.padding}

    def out_shape(self, shape):
        c, h, w = shape
        if c != self.in_channels:
            raise ShapeMismatch(f"conv2d expects {self.in_channels} channels, got {c}")
        k, s, p = self.kernel, self.stride, self.padding
        ho, wo = (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1
        if ho < 1 or wo < 1:
            raise ShapeMismatch(f"conv2d kernel {k} too large for input {h}x{w}")
        return (self.out_channels, ho, wo)

    def forward(self, x):
        self.out_shape(x.shape[1:])
        W, b = self.params
        p, k, s = self.padding, self.kernel, self.stride
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        win = _windows(xp, k, s)
        y = np.tensordot(win, W, axes=([1, 4, 5], [1, 2, 3]))  # N Ho Wo O
        y = y.transpose(0, 3, 1, 2) + b[None, :, None, None]
        return np.ascontiguousarray(y), (xp.shape, win)

    def backward(self, cache, gy):
        xp_shape, win = cache
        W, _ = self.params
        k, s, p = self.kernel, self.stride, self.padding
        N, O, Ho, Wo = gy.shape
        gW = np.tensordot(gy, win, axes=([0, 2, 3], [0, 2, 3]))
        gb = gy.sum(axis=(0, 2, 3))
        gcols = np.tensordot(gy, W, axes=([1], [0]))  # N Ho Wo C k k
        gxp = np.zeros(xp_shape)
        for i in range(k):
            for j in range(k):
                gxp[:, :, i:i + s * Ho:s, j:j + s * Wo:s] += gcols[..., i, j].transpose(0, 3, 1, 2)
        gx = gxp[:, :, p:xp_shape[2] - p, p:xp_shape[3] - p] if p else gxp
        return gx, [gW, gb]


class ConvTranspose2d(Layer):
    kind = "transposed_conv2d"
    param_names = ("weight", "bias")

    def __init__(self, in_channels, out_channels, kernel, stride=1, padding=0,
                 output_padding=0, rng=None, gain=1.0):
        super().__init__()
        if isinstance(output_padding, (list, tuple)):
            output_padding = tuple(int(v) for v in output_padding)
        else:
            output_padding = (int(output_padding),) * 2
        if any(v < 0 or (v and v >= stride) for v in output_padding):
            raise ValueError("output_padding must be smaller than stride")
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel, self.stride, self.padding = kernel, stride, padding
        self.output_padding = output_padding
        rng = rng if rng is not None else np.random.default_rng(0)
        std = gain / math.sqrt(in_channels * kernel * kernel / (stride * stride))
        self.params = [rng.normal(0.0, std, (in_channels, out_channels, kernel, kernel)),
                       np.zeros(out_channels)]

    def hyper(self):
        return {"in_channels": self.in_channels, "out_channels": self.out_channels,
                "kernel": self.kernel, "stride": self.stride, "padding": self.padding,
                "output_padding": list(self.output_padding)}

    def out_shape(self, shape):
        c, h, w = shape
        if c != self.in_channels:
            raise ShapeMismatch(f"transposed_conv2d expects {self.in_channels} channels, got {c}")
        k, s, p, (oph, opw) = self.kernel, self.stride, self.padding, self.output_padding
        ho = (h - 1) * s - 2 * p + k + oph
        wo = (w - 1) * s - 2 * p + k + opw
        if ho < 1 or wo < 1:
            raise ShapeMismatch("transposed_conv2d output would be empty")
        return (self.out_channels, ho, wo)

    def forward(self, x):
        _, ho, wo = self.out_shape(x.shape[1:])
        W, b = self.params
        k, s, p, (oph, opw) = self.kernel, self.stride, self.padding, self.output_padding
        N, C, H, Wd = x.shape
        cols = np.tensordot(x, W, axes=([1], [0]))  # N H W O k k
        hf, wf = (H - 1) * s + k + oph, (Wd - 1) * s + k + opw
        full = np.zeros((N, self.out_channels, hf, wf))
        for i in range(k):
            for j in range(k):
                full[:, :, i:i + s * H:s, j:j + s * Wd:s] += cols[..., i, j].transpose(0, 3, 1, 2)
        y = full[:, :, p:p + ho, p:p + wo] + b[None, :, None, None]
        return np.ascontiguousarray(y), (x, (hf, wf))

    def backward(self, cache, gy):
        x, (hf, wf) = cache
        W, _ = self.params
        k, s, p = self.kernel, self.stride, self.padding
        N, C, H, Wd = x.shape
        gfull = np.zeros((N, self.out_channels, hf, wf))
        gfull[:, :, p:p + gy.shape[2], p:p + gy.shape[3]] = gy
        win = _windows(gfull, k, s)[:, :, :H, :Wd]  # N O H W k k
        gx = np.tensordot(win, W, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
        gW = np.tensordot(x, win, axes=([0, 2, 3], [0, 2, 3]))
        gb = gy.sum(axis=(0, 2, 3))
        return np.ascontiguousarray(gx), [gW, gb]


class InstanceNorm(Layer):
    kind = "instance_norm"
    param_names = ("scale", "shift")

    def __init__(self, channels, eps=1e-6, affine=True):
        super().__init__()
        self.channels, self.eps, self.affine = channels, eps, affine
        self.params = [np.ones(channels), np.zeros(channels)] if affine else []

    def hyper(self):
        return {"channels": self.channels, "eps": self.eps, "affine": self.affine}

    def out_shape(self, shape):
        if shape[0] != self.channels:
            raise ShapeMismatch(f"instance_norm expects {self.channels} channels, got {shape[0]}")
        return shape

    def normalized(self, x):
        mu = x.mean(axis=(2, 3), keepdims=True)
        var = x.var(axis=(2, 3), keepdims=True)
        inv = 1.0 / np.sqrt(var + self.eps)
        return (x - mu) * inv, inv

    def forward(self, x):
        self.out_shape(x.shape[1:])
        xhat, inv = self.normalized(x)
        if not self.affine:
            return xhat, (xhat, inv)
        g, b = self.params
        return xhat * g[None, :, None, None] + b[None, :, None, None], (xhat, inv)

    def backward(self, cache, gy):
        xhat, inv = cache
        grads = []
        if self.affine:
            g, _ = self.params
            grads = [(gy * xhat).sum(axis=(0, 2, 3)), gy.sum(axis=(0, 2, 3))]
            gxhat = gy * g[None, :, None, None]
        else:
            gxhat = gy
        m1 = gxhat.mean(axis=(2, 3), keepdims=True)
        m2 = (gxhat * xhat).mean(axis=(2, 3), keepdims=True)
        return inv * (gxhat - m1 - xhat * m2), grads


class ReLU(Layer):
    kind = "relu"

    def forward(self, x):
        mask = x > 0
        return x * mask, mask

    def backward(self, mask, gy):
        return gy * mask, []


class LeakyReLU(Layer):
    kind = "leaky_relu"

    def __init__(self, negative_slope=0.2):
        super().__init__()
        self.negative_slope = negative_slope

    def hyper(self):
        return {"negative_slope": self.negative_slope}

    def forward(self, x):
        slope = np.where(x > 0, 1.0, self.negative_slope)
        return x * slope, slope

    def backward(self, slope, gy):
        return gy * slope, []


class Tanh(Layer):
    """``scale * tanh(x)``; the scale lets the output cover normalized
    features whose range exceeds (-1, 1)."""

    kind = "tanh"

    def __init__(self, scale=1.0):
        super().__init__()
        self.scale = scale

    def hyper(self):
        return {"scale": self.scale}

    def forward(self, x):
        t = np.tanh(x)
        return self.scale * t, t

    def backward(self, t, gy):
        return gy * self.scale * (1.0 - t * t), []


class Sigmoid(Layer):
    kind = "sigmoid"

    def forward(self, x):
        y = np.empty_like(x)
        pos = x >= 0
        y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        e = np.exp(x[~pos])
        y[~pos] = e / (1.0 + e)
        return y, y

    def backward(self, y, gy):
        return gy * y * (1.0 - y), []


class ResidualBlock(Layer):
    """``x + body(x)``.

    The default body is conv-IN-relu-conv-IN with 'same' padding. A custom
    body (list of layers or layer specs) must preserve the input shape.
    """

    kind = "residual_block"

    def __init__(self, channels, kernel=3, rng=None, eps=1e-6, body=None):
        super().__init__()
        self.channels, self.kernel = channels, kernel
        rng = rng if rng is not None else np.random.default_rng(0)
        self.custom = body is not None
        if body is None:
            if kernel % 2 != 1:
                raise ValueError("residual block kernel must be odd")
            pad = kernel // 2
            self.body = [
                Conv2d(channels, channels, kernel, 1, pad, rng=rng, gain=_gain("relu")),
                InstanceNorm(channels, eps=eps),
                ReLU(),
                Conv2d(channels, channels, kernel, 1, pad, rng=rng, gain=_gain(None)),
                InstanceNorm(channels, eps=eps),
            ]
        else:
            self.body = [b if isinstance(b, Layer) else layer_from_spec(b, rng) for b in body]
        self.eps = eps
        self.params = [p for layer in self.body for p in layer.params]

    @property
    def param_names(self):
        return tuple(f"body{i}.{n}" for i, layer in enumerate(self.body) for n in layer.param_names)

    def hyper(self):
        h = {"channels": self.channels, "kernel": self.kernel, "eps": self.eps}
        if self.custom:
            h["body"] = [layer.spec() for layer in self.body]
        return h

    def out_shape(self, shape):
        if shape[0] != self.channels:
            raise ShapeMismatch(f"residual_block expects {self.channels} channels, got {shape[0]}")
        out = shape
        for layer in self.body:
            out = layer.out_shape(out)
        if tuple(out) != tuple(shape):
            raise ShapeMismatch(f"residual body maps {shape} to {out}")
        return shape

    def forward(self, x):
        self.out_shape(x.shape[1:])
        caches = []
        h = x
        for layer in self.body:
            h, c = layer.forward(h)
            caches.append(c)
        return x + h, caches

    def backward(self, caches, gy):
        g = gy
        grads = []
        for layer, c in zip(reversed(self.body), reversed(caches)):
            g, lg = layer.backward(c, g)
            grads = lg + grads
        return gy + g, grads


KINDS = {
    cls.kind: cls
    for cls in (Conv2d, ConvTranspose2d, InstanceNorm, ReLU, LeakyReLU, Tanh, Sigmoid,
                ResidualBlock)
}


def layer_from_spec(spec: dict, rng=None) -> Layer:
    spec = dict(spec)
    kind = spec.pop("kind")
    cls = KINDS[kind]
    if cls in (Conv2d, ConvTranspose2d, ResidualBlock):
        return cls(**spec, rng=rng)
    return cls(**spec)
