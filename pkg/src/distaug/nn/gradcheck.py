"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class GradCheckReport:
    tolerance: float
    max_rel_error: dict = field(default_factory=dict)  # layer kind -> error
    input_rel_error: float = 0.0

    @property
    def passed(self) -> bool:
        worst = max([self.input_rel_error, *self.max_rel_error.values()])
        return worst <= self.tolerance

    def worst(self) -> float:
        return max([self.input_rel_error, *self.max_rel_error.values()])


def rel_error(a, b, floor=1e-6):
    """``||a - b|| / max(||a|| + ||b||, floor)``.

    The floor keeps gradients that are analytically zero (e.g. a conv bias
    feeding an instance norm) from turning finite-difference noise into a
    relative error near 1.
    """
    a, b = np.ravel(a), np.ravel(b)
    denom = max(np.linalg.norm(a) + np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / denom)


def grad_check(net, x, tolerance=1e-4, rng=None, h=1e-5, max_entries=24, projection=None):
    """Compare analytic and numeric gradients of ``sum(r * net(x))``.

    ``r`` is a fixed random projection. Up to ``max_entries`` randomly
    chosen entries of every parameter tensor and of the input are checked;
    the relative error (see ``rel_error``) is taken over each
    tensor's sampled entries and the maximum is kept per layer kind.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    x = np.array(x, dtype=np.float64)
    y, tape = net.forward(x)
    r = projection if projection is not None else rng.normal(size=y.shape)
    gx, grads = net.backward(tape, r)

    def loss():
        return float(np.sum(r * net(x)))

    def numeric(arr, idx):
        old = arr[idx]
        arr[idx] = old + h
        lp = loss()
        arr[idx] = old - h
        lm = loss()
        arr[idx] = old
        return (lp - lm) / (2 * h)

    def sample(arr):
        n = arr.size
        flat = rng.choice(n, size=min(n, max_entries), replace=False)
        return [np.unravel_index(i, arr.shape) for i in flat]

    report = GradCheckReport(tolerance)
    grads_iter = iter(grads)
    params_iter = iter(net.params)
    for layer in net.layers:
        ana, num = [], []
        for _ in layer.params:
            p, g = next(params_iter), next(grads_iter)
            for i in sample(p):
                num.append(numeric(p, i))
                ana.append(g[i])
        if ana:
            err = rel_error(ana, num)
            report.max_rel_error[layer.kind] = max(report.max_rel_error.get(layer.kind, 0.0), err)
    idx = sample(x)
    num = [numeric(x, i) for i in idx]
    report.input_rel_error = rel_error([gx[i] for i in idx], num)
    for layer in net.layers:
        # parameter-free kinds are covered by the input gradient
        report.max_rel_error.setdefault(layer.kind, report.input_rel_error)
    return report
