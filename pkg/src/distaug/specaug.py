"""SpecAugment: single-anchor time warp plus frequency and time masking."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PolicyShapeMismatch


@dataclass(frozen=True)
class MaskPolicy:
    num_freq_masks: int = 2
    max_freq_width: int = 27
    num_time_masks: int = 2
    max_time_width: int = 40
    warp_window: int = 5
    fill: str = "zero"

    def __post_init__(self):
        for name in ("num_freq_masks", "max_freq_width", "num_time_masks",
                     "max_time_width", "warp_window"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.fill not in ("zero", "mean"):
            raise ValueError(f"fill must be 'zero' or 'mean', got {self.fill!r}")

    def check(self, shape):
        T, F = shape
        if self.max_freq_width > F:
            raise PolicyShapeMismatch(f"max_freq_width {self.max_freq_width} > F={F}")
        if self.max_time_width > T:
            raise PolicyShapeMismatch(f"max_time_width {self.max_time_width} > T={T}")
        if self.warp_window and T <= 2 * self.warp_window + 1:
            raise PolicyShapeMismatch(f"warp_window {self.warp_window} too large for T={T}")


def warp_map(T, anchor, target):
    """Source position for every output frame.

    Piecewise linear through (0, 0), (target, anchor), (T-1, T-1).
    """
    t = np.arange(T, dtype=np.float64)
    src = np.empty(T)
    left = t <= target
    src[left] = t[left] * anchor / target
    right = ~left
    src[right] = anchor + (t[right] - target) * (T - 1 - anchor) / (T - 1 - target)
    src[0], src[-1] = 0.0, T - 1.0
    return src


def time_warp(feat, anchor, target):
    T = feat.shape[0]
    src = warp_map(T, anchor, target)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, T - 1)
    frac = (src - lo)[:, None]
    return (1 - frac) * feat[lo] + frac * feat[hi]


@dataclass(frozen=True)
class AugmentPlan:
    warp: tuple | None  # (anchor, target)
    freq_spans: tuple   # ((start, width), ...)
    time_spans: tuple


def draw_plan(shape, policy: MaskPolicy, rng_seed) -> AugmentPlan:
    """All random draws for one call, in a fixed order: warp, freq, time."""
    policy.check(shape)
    T, F = shape
    rng = np.random.default_rng(rng_seed)
    warp = None
    W = policy.warp_window
    if W > 0:
        anchor = int(rng.integers(W, T - W))
        target = anchor + int(rng.integers(-W, W + 1))
        warp = (anchor, min(max(target, 1), T - 2))
    freq, time = [], []
    for _ in range(policy.num_freq_masks):
        width = int(rng.integers(0, policy.max_freq_width + 1))
        freq.append((int(rng.integers(0, F - width + 1)), width))
    for _ in range(policy.num_time_masks):
        width = int(rng.integers(0, policy.max_time_width + 1))
        time.append((int(rng.integers(0, T - width + 1)), width))
    return AugmentPlan(warp, tuple(freq), tuple(time))


def apply_plan(feat, plan: AugmentPlan, fill="zero"):
    out = np.array(feat, dtype=np.float64)
    if plan.warp is not None:
        out = time_warp(out, *plan.warp)
    value = 0.0 if fill == "zero" else float(np.mean(feat))
    for start, width in plan.freq_spans:
        out[:, start:start + width] = value
    for start, width in plan.time_spans:
        out[start:start + width, :] = value
    return out


def apply_specaugment(feat: np.ndarray, policy: MaskPolicy, rng_seed) -> np.ndarray:
    """Warp, then frequency masks, then time masks on a T x F matrix.

    The mean fill uses the mean of the input matrix.
    """
    feat = np.asarray(feat, dtype=np.float64)
    if feat.ndim != 2:
        raise PolicyShapeMismatch(f"expected a T x F matrix, got shape {feat.shape}")
    plan = draw_plan(feat.shape, policy, rng_seed)
    return apply_plan(feat, plan, policy.fill)
