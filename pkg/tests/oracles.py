"""Independent reference implementations used as test oracles.

Each one is deliberately naive: loops and recursion rather than the
vectorized paths used by the package."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np


def edit_distance_oracle(a: str, b: str) -> int:
    """Levenshtein distance by memoized recursion on suffixes."""

    @lru_cache(maxsize=None)
    def d(i, j):
        if i == len(a):
            return len(b) - j
        if j == len(b):
            return len(a) - i
        if a[i] == b[j]:
            return d(i + 1, j + 1)
        return 1 + min(d(i + 1, j), d(i, j + 1), d(i + 1, j + 1))

    return d(0, 0)


def naive_convolve(x, h):
    out = np.zeros(len(x) + len(h) - 1)
    for i, xv in enumerate(x):
        for j, hv in enumerate(h):
            out[i + j] += xv * hv
    return out


def naive_stft(x, win_length, hop_length, fft_size):
    """Frame-by-frame DFT with an explicit twiddle matrix.

    Padding: win//2 zeros in front, zeros at the end until the last frame
    reaches at least win//2 samples past the signal.
    """
    n = len(x)
    front = win_length // 2
    frames = 1
    while (frames - 1) * hop_length + win_length < front + n + win_length // 2:
        frames += 1
    total = (frames - 1) * hop_length + win_length
    padded = np.zeros(total)
    padded[front:front + n] = x
    win = np.array([0.5 - 0.5 * math.cos(2 * math.pi * k / win_length) for k in range(win_length)])
    bins = fft_size // 2 + 1
    k = np.arange(bins)[:, None]
    m = np.arange(win_length)[None, :]
    twiddle = np.exp(-2j * np.pi * k * m / fft_size)
    out = np.empty((frames, bins), dtype=complex)
    for t in range(frames):
        seg = padded[t * hop_length:t * hop_length + win_length] * win
        out[t] = twiddle @ seg
    return out


def naive_conv2d(x, w, b, stride, pad):
    """Direct 7-loop cross-correlation for NCHW input and OIHW weights."""
    N, C, H, W = x.shape
    O, _, kh, kw = w.shape
    xp = np.zeros((N, C, H + 2 * pad, W + 2 * pad))
    xp[:, :, pad:pad + H, pad:pad + W] = x
    Ho = (H + 2 * pad - kh) // stride + 1
    Wo = (W + 2 * pad - kw) // stride + 1
    y = np.zeros((N, O, Ho, Wo))
    for n in range(N):
        for o in range(O):
            for i in range(Ho):
                for j in range(Wo):
                    acc = b[o]
                    for c in range(C):
                        for u in range(kh):
                            for v in range(kw):
                                acc += w[o, c, u, v] * xp[n, c, i * stride + u, j * stride + v]
                    y[n, o, i, j] = acc
    return y


def dominant_frequency(x, rate, nfft=None):
    """Frequency of the largest FFT magnitude (Hann-windowed), with bin width."""
    nfft = nfft or len(x)
    spec = np.abs(np.fft.rfft(x * np.hanning(len(x)), n=nfft))
    return np.argmax(spec) * rate / nfft, rate / nfft


def snr_db(reference, estimate):
    err = np.asarray(estimate) - np.asarray(reference)
    return 10 * math.log10(np.sum(np.square(reference)) / max(np.sum(np.square(err)), 1e-300))


def adam_closed_form(p, g, lr, b1, b2, eps, t=1):
    """One Adam step from zero moments at step ``t``."""
    m = (1 - b1) * g
    v = (1 - b2) * g * g
    mhat = m / (1 - b1 ** t)
    vhat = v / (1 - b2 ** t)
    return p - lr * mhat / (np.sqrt(vhat) + eps)
