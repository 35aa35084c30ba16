import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from distaug import dsp
from distaug.dsp import NormStats, StftConfig, Waveform
from distaug.errors import (DimMismatch, EmptySignal, FactorOutOfRange, NonColaConfig,
                            SampleRateMismatch, ZeroPowerInput)
from oracles import dominant_frequency, naive_convolve, naive_stft, snr_db

RATE = 16000
finite = st.floats(-1, 1, allow_nan=False, allow_infinity=False)


def wav(x, rate=RATE):
    return Waveform(np.asarray(x, dtype=float), rate)


def test_waveform_rejects_non_finite():
    with pytest.raises(ValueError):
        wav([0.0, np.nan])


def test_stft_matches_loop_oracle():
    rng = np.random.default_rng(0)
    for n in (1, 399, 400, 401, 1600, 2345):
        x = rng.normal(size=n)
        s = dsp.stft(wav(x))
        ref = naive_stft(x, 400, 160, 512)
        assert s.frames.shape == ref.shape
        assert np.allclose(s.frames, ref, atol=1e-9)


def test_stft_frame_count_formula():
    cfg = StftConfig()
    for n in (1, 500, 16000):
        s = dsp.stft(wav(np.ones(n)), cfg)
        padded = (s.frames.shape[0] - 1) * cfg.hop_length + cfg.win_length
        assert s.frames.shape[0] == 1 + (padded - cfg.win_length) // cfg.hop_length


def test_stft_empty():
    with pytest.raises(EmptySignal):
        dsp.stft(wav([]))


def test_zero_signal():
    s = dsp.stft(wav(np.zeros(3000)))
    assert not np.any(s.frames)
    assert not np.any(dsp.istft(s).samples)


def test_bin_center_sinusoid():
    cfg = StftConfig()
    k = 40
    f = k * RATE / cfg.fft_size
    t = np.arange(RATE) / RATE
    s = dsp.stft(wav(np.sin(2 * np.pi * f * t)), cfg)
    interior = s.magnitude[3:-3]
    assert np.all(np.argmax(interior, axis=1) == k)


def test_parseval_per_frame():
    rng = np.random.default_rng(1)
    cfg = StftConfig(400, 160, 512)
    x = rng.normal(size=4000)
    s = dsp.stft(wav(x), cfg)
    full = np.fft.irfft(s.frames, n=cfg.fft_size, axis=1)
    # time-domain energy of the windowed frames equals spectral energy
    spec = (np.abs(s.frames[:, 0]) ** 2 + np.abs(s.frames[:, -1]) ** 2
            + 2 * np.sum(np.abs(s.frames[:, 1:-1]) ** 2, axis=1)) / cfg.fft_size
    assert np.allclose(spec, np.sum(full ** 2, axis=1))


@given(arrays(float, st.integers(400, 2000), elements=finite), st.floats(-3, 3),
       st.floats(-3, 3))
def test_stft_linearity(x1, a, b):
    rng = np.random.default_rng(len(x1))
    x2 = rng.normal(size=len(x1))
    lhs = dsp.stft(wav(a * x1 + b * x2)).frames
    rhs = a * dsp.stft(wav(x1)).frames + b * dsp.stft(wav(x2)).frames
    assert np.allclose(lhs, rhs, atol=1e-8)


def test_round_trip_hundred_signals():
    rng = np.random.default_rng(2)
    worst = math.inf
    for _ in range(100):
        x = rng.normal(size=int(rng.integers(400, 8000)))
        y = dsp.istft(dsp.stft(wav(x))).samples
        assert len(y) == len(x)
        worst = min(worst, snr_db(x, y))
    assert worst >= 40


def test_istft_untrimmed_length():
    cfg = StftConfig()
    s = dsp.stft(wav(np.ones(5000)), cfg)
    T = s.frames.shape[0]
    out = dsp.istft(s, trim=False)
    assert len(out) == T * cfg.hop_length + (cfg.win_length - cfg.hop_length)


def test_istft_single_frame_locality():
    cfg = StftConfig()
    s = dsp.stft(wav(np.zeros(5000)), cfg)
    frames = np.zeros_like(s.frames)
    t = 7
    frames[t] = np.random.default_rng(0).normal(size=cfg.num_bins)
    out = dsp.istft(s.with_frames(frames), trim=False).samples
    support = np.nonzero(np.abs(out) > 0)[0]
    assert support.min() >= t * cfg.hop_length
    assert support.max() < t * cfg.hop_length + cfg.win_length


def test_non_cola_rejected():
    bad = StftConfig(win_length=4, hop_length=4, fft_size=4)
    s = dsp.stft(wav(np.ones(32)), bad)
    with pytest.raises(NonColaConfig):
        dsp.istft(s)


def test_normalize_stats_and_round_trip():
    rng = np.random.default_rng(3)
    mats = [rng.normal(2, 3, size=(50, 9)), rng.normal(-1, 0.5, size=(30, 9))]
    stats = NormStats.fit(mats)
    z = dsp.normalize(np.concatenate(mats), stats)
    assert np.allclose(z.mean(axis=0), 0, atol=1e-6)
    assert np.allclose(z.std(axis=0), 1, atol=1e-6)
    v = rng.normal(size=(20, 9))
    assert np.allclose(dsp.denormalize(dsp.normalize(v, stats), stats), v, atol=1e-6)
    ident = NormStats.identity(9)
    assert np.array_equal(dsp.normalize(v, ident), v)
    with pytest.raises(DimMismatch):
        dsp.normalize(np.ones((3, 8)), stats)


def test_std_floor():
    stats = NormStats.fit([np.ones((10, 3))])
    assert np.all(stats.std == dsp.STD_FLOOR)


def test_speed_identity_and_lengths():
    x = np.random.default_rng(4).normal(size=16000)
    assert np.array_equal(dsp.speed_perturb(wav(x), 1.0).samples, x)
    assert abs(len(dsp.speed_perturb(wav(x), 0.9)) - 17778) <= 1
    with pytest.raises(FactorOutOfRange):
        dsp.speed_perturb(wav(x), 2.5)


@pytest.mark.parametrize("factor", [0.9, 1.0, 1.1])
def test_speed_frequency_scaling(factor):
    f = 440.0
    n = RATE
    t = np.arange(n) / RATE
    y = dsp.speed_perturb(wav(np.sin(2 * np.pi * f * t)), factor).samples
    peak, bin_hz = dominant_frequency(y, RATE)
    assert abs(peak - factor * f) <= bin_hz


@given(st.integers(100, 5000), st.floats(0.5, 2.0))
def test_speed_duration_property(n, factor):
    y = dsp.speed_perturb(wav(np.zeros(n) + 0.1), factor)
    assert abs(len(y) * factor - n) <= factor + 1


def test_convolve_identity_and_shift():
    x = np.random.default_rng(5).uniform(-0.5, 0.5, size=100)
    out = dsp.convolve_rir(wav(x), wav([1.0]))
    assert np.allclose(out.samples, x)
    d = 7
    shifted = dsp.convolve_rir(wav(x), wav(np.r_[np.zeros(d), 1.0])).samples
    assert np.allclose(shifted[d:], x)
    assert np.all(shifted[:d] == 0)


@given(arrays(float, st.integers(1, 64), elements=finite),
       arrays(float, st.integers(1, 64), elements=st.floats(-0.05, 0.05)))
def test_convolve_matches_oracle(x, h):
    out = dsp.convolve_rir(wav(x), wav(h)).samples
    ref = naive_convolve(x, h)
    peak = np.max(np.abs(ref))
    if peak > 1:
        ref = ref / peak
    assert len(out) == len(x) + len(h) - 1
    assert np.allclose(out, ref, atol=1e-10)


def test_convolve_specific_sizes():
    rng = np.random.default_rng(6)
    x, h = rng.uniform(-0.2, 0.2, 32), rng.uniform(-0.2, 0.2, 8)
    assert np.allclose(dsp.convolve_rir(wav(x), wav(h)).samples, naive_convolve(x, h), atol=1e-10)


def test_convolve_peak_bounded():
    out = dsp.convolve_rir(wav(np.ones(50)), wav(np.ones(10)))
    assert out.peak() == pytest.approx(1.0)


def test_convolve_rate_mismatch():
    with pytest.raises(SampleRateMismatch):
        dsp.convolve_rir(wav([1.0]), wav([1.0], 8000))


def test_mix_equal_power_zero_db():
    rng = np.random.default_rng(7)
    s = rng.normal(size=1000)
    n = rng.normal(size=1000)
    n *= math.sqrt(dsp.power(s) / dsp.power(n))
    assert dsp.noise_gain(s, n, 0.0) == pytest.approx(1.0, abs=1e-6)


def test_mix_infinite_snr():
    s = wav(np.random.default_rng(8).normal(size=100))
    out = dsp.mix_at_snr(s, wav(np.ones(10)), math.inf)
    assert np.array_equal(out.samples, s.samples)


@given(st.floats(-10, 40), st.integers(50, 3000), st.integers(1, 4000))
def test_mix_snr_accuracy(snr, n_speech, n_noise):
    rng = np.random.default_rng(n_speech * 7 + n_noise)
    s = wav(rng.normal(size=n_speech))
    noise = wav(rng.normal(size=n_noise) + 0.01)
    mixed = dsp.mix_at_snr(s, noise, snr)
    assert abs(dsp.measured_snr_db(s.samples, mixed.samples) - snr) <= 0.01


def test_mix_zero_power():
    with pytest.raises(ZeroPowerInput):
        dsp.mix_at_snr(wav(np.zeros(10)), wav(np.ones(10)), 10)
    with pytest.raises(ZeroPowerInput):
        dsp.mix_at_snr(wav(np.ones(10)), wav(np.zeros(10)), 10)


def test_wav_pcm16_bit_exact(tmp_path):
    rng = np.random.default_rng(9)
    ints = rng.integers(-32768, 32768, size=500)
    w = wav(ints / 32768.0)
    dsp.write_wav(tmp_path / "a.wav", w, "pcm16")
    back = dsp.read_wav(tmp_path / "a.wav")
    assert np.array_equal(back.samples, w.samples)
    dsp.write_wav(tmp_path / "b.wav", back, "pcm16")
    assert (tmp_path / "a.wav").read_bytes() == (tmp_path / "b.wav").read_bytes()


def test_wav_float32_round_trip(tmp_path):
    w = wav(np.random.default_rng(10).uniform(-1, 1, 300).astype(np.float32))
    dsp.write_wav(tmp_path / "f.wav", w)
    back = dsp.read_wav(tmp_path / "f.wav")
    assert back.sample_rate_hz == RATE
    assert np.array_equal(back.samples, w.samples)


def test_peak_normalize_keeps_quiet_signals():
    w = wav([0.1, -0.2])
    assert dsp.peak_normalize(w) is w
    assert dsp.peak_normalize(wav([2.0, -4.0])).peak() == pytest.approx(1.0)
