"""Sequential networks with a reverse-mode tape."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NoForwardTrace, NonFiniteActivation, ShapeMismatch
from .layers import Layer, layer_from_spec


@dataclass
class Tape:
    """Everything a backward pass needs from one forward call."""

    net_id: int
    input_shape: tuple
    caches: list


class Network:
    """A layer list applied in order.

    ``forward`` returns the output and a tape; ``backward`` consumes a
    tape and returns the input gradient plus parameter gradients aligned
    with ``params``. An empty layer list is the identity map.
    """

    def __init__(self, layers=(), input_shape=None, name="net"):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape) if input_shape is not None else None
        self.name = name
        self._last_tape = None
        if self.input_shape is not None:
            self.output_shape()

    @property
    def params(self):
        return [p for layer in self.layers for p in layer.params]

    def param_names(self):
        return [f"{i}.{layer.kind}.{n}" for i, layer in enumerate(self.layers)
                for n in layer.param_names]

    def num_params(self):
        return int(sum(p.size for p in self.params))

    def specs(self):
        return [layer.spec() for layer in self.layers]

    def output_shape(self, shape=None):
        shape = tuple(shape or self.input_shape)
        for layer in self.layers:
            shape = layer.out_shape(shape)
        return shape

    def forward(self, x, keep_trace=True):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4:
            raise ShapeMismatch(f"{self.name}: expected NCHW input, got shape {x.shape}")
        if self.input_shape is not None and x.shape[1:] != self.input_shape:
            raise ShapeMismatch(f"{self.name}: expected input {self.input_shape}, got {x.shape[1:]}")
        caches = []
        h = x
        for i, layer in enumerate(self.layers):
            h, c = layer.forward(h)
            if not np.all(np.isfinite(h)):
                raise NonFiniteActivation(f"{self.name}: layer {i} ({layer.kind}) produced non-finite values")
            caches.append(c)
        tape = Tape(id(self), x.shape, caches)
        if keep_trace:
            self._last_tape = tape
        return h, tape

    def __call__(self, x):
        return self.forward(x, keep_trace=False)[0]

    def backward(self, tape=None, upstream=None):
        if tape is None:
            tape = self._last_tape
        if tape is None or tape.net_id != id(self):
            raise NoForwardTrace(f"{self.name}: backward called without a matching forward")
        g = np.asarray(upstream, dtype=np.float64)
        grads = []
        for layer, c in zip(reversed(self.layers), reversed(tape.caches)):
            g, lg = layer.backward(c, g)
            grads = lg + grads
        return g, grads

    @classmethod
    def from_specs(cls, specs, input_shape=None, name="net", rng=None):
        return cls([layer_from_spec(s, rng) for s in specs], input_shape, name)


def forward(net: Network, x):
    return net.forward(x)[0]


def backward(net: Network, x, upstream_grad):
    """Gradients for the most recent forward of ``net`` on ``x``."""
    tape = net._last_tape
    if tape is None or tape.input_shape != np.shape(x):
        raise NoForwardTrace(f"{net.name}: no forward trace for input of shape {np.shape(x)}")
    return net.backward(tape, upstream_grad)


def zeros_like_params(net: Network):
    return [np.zeros_like(p) for p in net.params]


def accumulate(total, grads):
    for t, g in zip(total, grads):
        t += g
    return total
