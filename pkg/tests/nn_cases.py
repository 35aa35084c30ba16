"""Random small networks, one layer kind each, for gradient checks."""

from __future__ import annotations

import numpy as np

from distaug import nn

KINDS = ("conv2d", "transposed_conv2d", "instance_norm", "relu", "leaky_relu", "tanh",
         "sigmoid", "residual_block")


def _away_from_kink(rng, shape, margin=0.05):
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-12) * margin, x)


def make_case(kind, rng):
    """Network containing a single layer of ``kind`` plus a matching input."""
    n = int(rng.integers(1, 3))
    c = int(rng.integers(1, 4))
    h, w = int(rng.integers(4, 8)), int(rng.integers(4, 8))
    x = rng.normal(size=(n, c, h, w))
    if kind == "conv2d":
        k = int(rng.integers(1, 4))
        layer = nn.Conv2d(c, int(rng.integers(1, 4)), k, int(rng.integers(1, 3)),
                          int(rng.integers(0, 2)), rng=rng)
        layer.params[1][:] = rng.normal(size=layer.params[1].shape)
    elif kind == "transposed_conv2d":
        s = int(rng.integers(1, 3))
        layer = nn.ConvTranspose2d(c, int(rng.integers(1, 4)), int(rng.integers(1, 4)), s,
                                   int(rng.integers(0, 2)), output_padding=int(rng.integers(0, s)),
                                   rng=rng)
        layer.params[1][:] = rng.normal(size=layer.params[1].shape)
        if layer.out_shape((c, h, w))[1] < 1:
            return make_case(kind, rng)
    elif kind == "instance_norm":
        layer = nn.InstanceNorm(c)
        layer.params[0][:] = rng.uniform(0.5, 2.0, c)
        layer.params[1][:] = rng.normal(size=c)
    elif kind == "relu":
        layer, x = nn.ReLU(), _away_from_kink(rng, x.shape)
    elif kind == "leaky_relu":
        layer, x = nn.LeakyReLU(float(rng.uniform(0.01, 0.5))), _away_from_kink(rng, x.shape)
    elif kind == "tanh":
        layer = nn.Tanh(float(rng.uniform(0.5, 3.0)))
    elif kind == "sigmoid":
        layer, x = nn.Sigmoid(), 3 * x
    elif kind == "residual_block":
        layer = nn.ResidualBlock(c, 3, rng=rng)
        for sub in layer.body:
            if sub.kind == "instance_norm":
                sub.params[0][:] = rng.uniform(0.5, 2.0, c)
                sub.params[1][:] = rng.normal(size=c)
    else:
        raise ValueError(kind)
    return nn.Network([layer], x.shape[1:], kind), x


def worst_errors(instances=20, seed=0):
    """Max relative error per kind over ``instances`` random cases."""
    rng = np.random.default_rng(seed)
    worst = {}
    for kind in KINDS:
        for _ in range(instances):
            net, x = make_case(kind, rng)
            rep = nn.grad_check(net, x, rng=rng)
            worst[kind] = max(worst.get(kind, 0.0), rep.worst())
    return worst
