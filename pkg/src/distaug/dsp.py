"""Signal-level operations: STFT/ISTFT, feature normalization, speed
perturbation, RIR convolution, SNR-controlled mixing and WAV I/O."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
import scipy.io.wavfile
import scipy.signal

from .errors import (
    DimMismatch,
    EmptySignal,
    FactorOutOfRange,
    NonColaConfig,
    SampleRateMismatch,
    ZeroPowerInput,
)

STD_FLOOR = 1e-5
SPEED_FACTORS = (0.9, 1.0, 1.1)


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1:
            raise ValueError("Waveform samples must be one-dimensional")
        if not np.all(np.isfinite(s)):
            raise ValueError("Waveform contains non-finite samples")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError("sample_rate_hz must be positive")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz

    def peak(self) -> float:
        return float(np.max(np.abs(self.samples))) if len(self) else 0.0


@dataclass(frozen=True)
class StftConfig:
    win_length: int = 400
    hop_length: int = 160
    fft_size: int = 512
    window: str = "hann"

    def __post_init__(self):
        if not 0 < self.hop_length <= self.win_length <= self.fft_size:
            raise ValueError("need 0 < hop_length <= win_length <= fft_size")
        if self.fft_size & (self.fft_size - 1):
            raise ValueError("fft_size must be a power of two")
        if self.window != "hann":
            raise ValueError(f"unsupported window {self.window!r}")

    @property
    def num_bins(self) -> int:
        return self.fft_size // 2 + 1

    def window_array(self) -> np.ndarray:
        # periodic Hann
        n = np.arange(self.win_length)
        return 0.5 - 0.5 * np.cos(2 * np.pi * n / self.win_length)

    def to_dict(self):
        return {"win_length": self.win_length, "hop_length": self.hop_length,
                "fft_size": self.fft_size, "window": self.window}


@dataclass(frozen=True)
class ComplexSpectrogram:
    frames: np.ndarray  # T x F complex
    config: StftConfig
    sample_rate_hz: int
    pad_start: int = 0
    num_samples: int | None = None

    def __post_init__(self):
        if self.frames.ndim != 2 or self.frames.shape[1] != self.config.num_bins:
            raise DimMismatch(
                f"frames shape {self.frames.shape} inconsistent with F={self.config.num_bins}")

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.frames)

    @property
    def phase(self) -> np.ndarray:
        return np.angle(self.frames)

    def with_frames(self, frames):
        return ComplexSpectrogram(frames, self.config, self.sample_rate_hz,
                                  self.pad_start, self.num_samples)


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray = field(default=None)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.ones_like(mean) if self.std is None else np.asarray(self.std, dtype=np.float64)
        if mean.shape != std.shape or mean.ndim != 1:
            raise DimMismatch("mean and std must be vectors of equal length")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", np.maximum(std, STD_FLOOR))

    @classmethod
    def identity(cls, num_bins):
        return cls(np.zeros(num_bins), np.ones(num_bins))

    @classmethod
    def fit(cls, matrices) -> "NormStats":
        """Per-bin statistics over the frames of one or more T x F matrices."""
        stacked = np.concatenate([np.asarray(m, dtype=np.float64) for m in matrices], axis=0)
        return cls(stacked.mean(axis=0), stacked.std(axis=0))


def _padding(n, cfg: StftConfig):
    pad_start = cfg.win_length // 2
    needed = pad_start + n + cfg.win_length // 2
    frames = 1 + max(0, math.ceil((needed - cfg.win_length) / cfg.hop_length))
    total = (frames - 1) * cfg.hop_length + cfg.win_length
    return pad_start, total - pad_start - n


def stft(w: Waveform, cfg: StftConfig = StftConfig()) -> ComplexSpectrogram:
    """Hann-windowed STFT.

    The signal is padded with ``win_length // 2`` zeros at the front and
    enough zeros at the end to complete the last frame, so every input
    sample sits under a non-vanishing part of at least one window.
    """
    n = len(w)
    if n == 0:
        raise EmptySignal("cannot take the STFT of an empty signal")
    pad_start, pad_end = _padding(n, cfg)
    x = np.concatenate([np.zeros(pad_start), w.samples, np.zeros(pad_end)])
    num_frames = 1 + (len(x) - cfg.win_length) // cfg.hop_length
    idx = np.arange(cfg.win_length)[None, :] + cfg.hop_length * np.arange(num_frames)[:, None]
    segs = x[idx] * cfg.window_array()
    frames = np.fft.rfft(segs, n=cfg.fft_size, axis=1)
    return ComplexSpectrogram(frames, cfg, w.sample_rate_hz, pad_start, n)


def check_nola(cfg: StftConfig):
    win2 = cfg.window_array() ** 2
    per_phase = np.array([win2[k::cfg.hop_length].sum() for k in range(cfg.hop_length)])
    if per_phase.min() <= 1e-8 * per_phase.max():
        raise NonColaConfig(
            f"hop {cfg.hop_length} leaves gaps in the squared-window overlap-add "
            f"for win {cfg.win_length}")


def istft(s: ComplexSpectrogram, trim: bool = True) -> Waveform:
    """Weighted overlap-add inverse with window-square normalization.

    With ``trim=False`` the raw overlap-add buffer of length
    ``T*hop + (win - hop)`` is returned; otherwise the front padding is
    removed and the result cut to the original signal length.
    """
    cfg = s.config
    check_nola(cfg)
    win = cfg.window_array()
    num_frames = s.frames.shape[0]
    out_len = num_frames * cfg.hop_length + (cfg.win_length - cfg.hop_length)
    segs = np.fft.irfft(s.frames, n=cfg.fft_size, axis=1)[:, :cfg.win_length] * win
    buf = np.zeros(out_len)
    wsum = np.zeros(out_len)
    for t in range(num_frames):
        a = t * cfg.hop_length
        buf[a:a + cfg.win_length] += segs[t]
        wsum[a:a + cfg.win_length] += win ** 2
    nz = wsum > 1e-10
    buf[nz] /= wsum[nz]
    buf[~nz] = 0.0
    if trim:
        buf = buf[s.pad_start:]
        if s.num_samples is not None:
            buf = buf[:s.num_samples]
    return Waveform(buf, s.sample_rate_hz)


def normalize(v: np.ndarray, stats: NormStats) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != stats.mean.shape[0]:
        raise DimMismatch(f"feature dim {v.shape[-1]} != stats dim {stats.mean.shape[0]}")
    return (v - stats.mean) / stats.std


def denormalize(v: np.ndarray, stats: NormStats) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != stats.mean.shape[0]:
        raise DimMismatch(f"feature dim {v.shape[-1]} != stats dim {stats.mean.shape[0]}")
    return v * stats.std + stats.mean


def speed_perturb(w: Waveform, factor: float) -> Waveform:
    """Kaldi-style speed perturbation: resample by 1/factor, keep the rate.

    Tempo and pitch both scale by ``factor``.
    """
    if not 0.5 <= factor <= 2.0:
        raise FactorOutOfRange(f"speed factor {factor} outside [0.5, 2.0]")
    if factor == 1.0:
        return Waveform(w.samples.copy(), w.sample_rate_hz)
    ratio = Fraction(1.0 / factor).limit_denominator(1000)
    y = scipy.signal.resample_poly(w.samples, ratio.numerator, ratio.denominator)
    target = int(round(len(w) / factor))
    if len(y) >= target:
        y = y[:target]
    else:
        y = np.concatenate([y, np.zeros(target - len(y))])
    return Waveform(y, w.sample_rate_hz)


def convolve_rir(w: Waveform, rir: Waveform) -> Waveform:
    """Full linear convolution, scaled down only if the peak exceeds 1."""
    if w.sample_rate_hz != rir.sample_rate_hz:
        raise SampleRateMismatch(f"{w.sample_rate_hz} Hz vs {rir.sample_rate_hz} Hz")
    y = scipy.signal.convolve(w.samples, rir.samples, mode="full")
    peak = np.max(np.abs(y)) if len(y) else 0.0
    if peak > 1.0:
        y = y / peak
    return Waveform(y, w.sample_rate_hz)


def power(x: np.ndarray) -> float:
    return float(np.mean(np.square(x)))


def fit_length(noise: np.ndarray, n: int) -> np.ndarray:
    reps = -(-n // len(noise))
    return np.tile(noise, reps)[:n]


def noise_gain(speech: np.ndarray, noise: np.ndarray, snr_db: float) -> float:
    ps, pn = power(speech), power(noise)
    if ps <= 0 or pn <= 0:
        raise ZeroPowerInput("speech and noise must both have non-zero power")
    return math.sqrt(ps / (pn * 10.0 ** (snr_db / 10.0)))


def mix_at_snr(speech: Waveform, noise: Waveform, snr_db: float) -> Waveform:
    """speech + g*noise with g set so the mixture has the requested SNR.

    ``snr_db = math.inf`` returns the speech unchanged.
    """
    if speech.sample_rate_hz != noise.sample_rate_hz:
        raise SampleRateMismatch(f"{speech.sample_rate_hz} Hz vs {noise.sample_rate_hz} Hz")
    if len(noise) == 0:
        raise ZeroPowerInput("empty noise signal")
    n = fit_length(noise.samples, len(speech))
    if math.isinf(snr_db) and snr_db > 0:
        if power(speech.samples) <= 0:
            raise ZeroPowerInput("speech has zero power")
        return Waveform(speech.samples.copy(), speech.sample_rate_hz)
    g = noise_gain(speech.samples, n, snr_db)
    return Waveform(speech.samples + g * n, speech.sample_rate_hz)


def measured_snr_db(speech: np.ndarray, mixture: np.ndarray) -> float:
    return 10.0 * math.log10(power(speech) / power(mixture - speech))


def peak_normalize(w: Waveform, peak: float = 1.0) -> Waveform:
    p = w.peak()
    if p <= peak:
        return w
    return Waveform(w.samples * (peak / p), w.sample_rate_hz)


def read_wav(path) -> Waveform:
    """Read a mono PCM16 or float32 WAV file as float64 samples."""
    rate, data = scipy.io.wavfile.read(str(path))
    if data.ndim != 1:
        raise ValueError(f"{path}: only mono WAV is supported")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32 or data.dtype == np.float64:
        samples = data.astype(np.float64)
    else:
        raise ValueError(f"{path}: unsupported sample format {data.dtype}")
    return Waveform(samples, rate)


def write_wav(path, w: Waveform, fmt: str = "float32"):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "pcm16":
        data = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype(np.int16)
    elif fmt == "float32":
        data = w.samples.astype(np.float32)
    else:
        raise ValueError(f"unknown WAV format {fmt!r}")
    scipy.io.wavfile.write(str(path), w.sample_rate_hz, data)
