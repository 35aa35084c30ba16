"""Synthetic data: the Cycle-GAN toy domains and the small end-to-end
corpus used by the bundled recipe."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.signal

from . import dsp
from .cyclegan import (
    GanConfig,
    GanModel,
    TrainSchedule,
    PatchSampler,
    band_energy_profile,
    cycle_loss,
    fit_stats,
    map_clean_to_noisy,
    map_features,
    train,
    waveform_features,
    waveform_profile,
)
from .dsp import StftConfig, Waveform
from .manifest import Manifest, ManifestRecord, write_manifest
from .pseudolabel import write_hypotheses

TOY_RATE = 8000
COLORATION = np.array([1.0, -0.9])  # first-difference tilt: attenuates lows, lifts highs
NOISE_FLOOR_SNR_DB = 15.0


def toy_gan_config(**overrides) -> GanConfig:
    base = dict(patch_frames=16, sample_rate_hz=TOY_RATE, stft=StftConfig(64, 16, 64),
                gen_channels=8, gen_down=1, gen_res=2, gen_skip=True, gen_out_gain=0.3,
                disc_channels=8, disc_kernel=3, lambda_cyc=10.0)
    base.update(overrides)
    return GanConfig(**base)


def multitone(rng, n, rate=TOY_RATE, num_tones=(2, 5)):
    """Sum of random steady tones under a random on/off envelope."""
    t = np.arange(n) / rate
    k = int(rng.integers(num_tones[0], num_tones[1] + 1))
    freqs = rng.uniform(150.0, 3600.0, k)
    amps = rng.uniform(0.2, 1.0, k)
    phases = rng.uniform(0, 2 * np.pi, k)
    x = (amps[:, None] * np.sin(2 * np.pi * freqs[:, None] * t + phases[:, None])).sum(axis=0)
    seg = max(1, n // 8)
    env = np.repeat(rng.uniform(0.3, 1.0, -(-n // seg)), seg)[:n]
    env = scipy.signal.lfilter([0.02], [1, -0.98], env)
    x = x * env
    return 0.5 * x / (np.max(np.abs(x)) + 1e-12)


def colorize(x, rng, snr_db=NOISE_FLOOR_SNR_DB):
    y = scipy.signal.lfilter(COLORATION, [1.0], x)
    noise = rng.normal(size=len(y))
    g = dsp.noise_gain(y, noise, snr_db)
    y = y + g * noise
    return 0.5 * y / (np.max(np.abs(y)) + 1e-12)


@dataclass
class ToyDomains:
    clean: list
    noisy: list
    held_out_clean: list


def toy_gan_domains(seed=0, n_clean=24, n_noisy=24, n_held_out=4, seconds=0.5) -> ToyDomains:
    """Unpaired domains: clean multitones, and different multitones passed
    through a fixed coloration filter plus a white noise floor."""
    rng = np.random.default_rng(seed)
    n = int(seconds * TOY_RATE)
    clean = [Waveform(multitone(rng, n), TOY_RATE) for _ in range(n_clean)]
    noisy = [Waveform(colorize(multitone(rng, n), rng), TOY_RATE) for _ in range(n_noisy)]
    held = [Waveform(multitone(rng, n), TOY_RATE) for _ in range(n_held_out)]
    return ToyDomains(clean, noisy, held)


@dataclass
class BenchmarkResult:
    history: list
    cycle_initial: float
    cycle_final: float
    profile_clean: np.ndarray
    profile_noisy: np.ndarray
    profile_mapped: np.ndarray
    profile_resynth: np.ndarray
    model: GanModel

    @property
    def cycle_ratio(self):
        return self.cycle_final / self.cycle_initial

    @property
    def distance_before(self):
        return float(np.linalg.norm(self.profile_clean - self.profile_noisy))

    @property
    def distance_after(self):
        return float(np.linalg.norm(self.profile_mapped - self.profile_noisy))

    @property
    def profile_improvement(self):
        """Fraction by which mapping closes the gap to the noisy profile."""
        return 1.0 - self.distance_after / self.distance_before


def run_toy_benchmark(steps=2000, seed=0, config: GanConfig | None = None, batch_size=2,
                      learning_rate=2e-3, eval_patches=16) -> BenchmarkResult:
    cfg = config or toy_gan_config()
    dom = toy_gan_domains(seed)
    model = GanModel.build(cfg, seed)
    cf, nf = fit_stats(model, dom.clean, dom.noisy)
    eval_rng = np.random.default_rng(seed + 1)
    S = PatchSampler(cf, model.clean_stats, cfg.patch_frames).draw(eval_rng, eval_patches)
    X = PatchSampler(nf, model.noisy_stats, cfg.patch_frames).draw(eval_rng, eval_patches)
    before = cycle_loss(model.G, model.F, S, X)
    res = train(model, dom.clean, dom.noisy,
                TrainSchedule(steps=steps, learning_rate=learning_rate, batch_size=batch_size,
                              seed=seed))
    after = cycle_loss(model.G, model.F, S, X)
    split = model.split
    held = [waveform_features(w, cfg) for w in dom.held_out_clean]
    resynth = [map_clean_to_noisy(model, w) for w in dom.held_out_clean]
    return BenchmarkResult(
        history=res.history,
        cycle_initial=before,
        cycle_final=after,
        profile_clean=band_energy_profile(held, split),
        profile_noisy=band_energy_profile(nf, split),
        profile_mapped=band_energy_profile([map_features(model, f) for f in held], split),
        profile_resynth=waveform_profile(resynth, cfg),
        model=model,
    )


# ------------------------------------------------------------ e2e corpus

WORDS = ("the", "dinner", "party", "kitchen", "table", "pass", "salt", "please", "more",
         "wine", "bread", "good", "evening", "music", "loud", "window", "open", "close",
         "guests", "arrive", "soon", "tonight", "cooking", "pasta", "again", "thanks")


def random_sentence(rng, lo=4, hi=9):
    k = int(rng.integers(lo, hi + 1))
    return " ".join(WORDS[int(i)] for i in rng.integers(0, len(WORDS), k))


def corrupt(text, rng, rate):
    """Simulated decoder output: random character edits at ``rate``."""
    letters = "abcdefghijklmnopqrstuvwxyz "
    out = []
    for ch in text:
        u = rng.random()
        if u < rate / 3:
            continue
        if u < 2 * rate / 3:
            out.append(letters[int(rng.integers(len(letters)))])
            continue
        out.append(ch)
        if u < rate:
            out.append(letters[int(rng.integers(len(letters)))])
    return "".join(out).strip()


def make_toy_corpus(out_dir, seed=0, num_utts=120, rate=16000, xvec_dim=16, gst_dim=8):
    """Write the small end-to-end corpus (about five minutes of audio).

    Layout under ``out_dir``: ``wav/`` utterances and ``orig.jsonl``;
    ``hyps.txt`` simulated decoder hypotheses; ``cond.txt`` conditioning
    vectors; ``noise/`` additive-noise clips; ``noisy/`` target-domain
    recordings for Cycle-GAN training.
    """
    from .ttsaug import stub_synthesize

    out = Path(out_dir)
    rng = np.random.default_rng(seed)
    records, hyps, cond_lines = [], {}, []
    for i in range(num_utts):
        utt = f"toy{i:03d}"
        spk = f"spk{i % 4}"
        text = random_sentence(rng)
        w = stub_synthesize(text, seed=seed * 1000 + i, sample_rate_hz=rate)
        w = dsp.Waveform(0.8 * w.samples / (w.peak() + 1e-12), rate)
        path = out / "wav" / f"{utt}.wav"
        dsp.write_wav(path, w, "pcm16")
        w = dsp.read_wav(path)
        records.append(ManifestRecord(utt, f"wav/{utt}.wav", len(w) / rate, text, "orig", spk))
        rate_err = float(rng.choice([0.0, 0.0, 0.05, 0.15, 0.3, 0.6, 1.0]))
        hyps[utt] = corrupt(text, rng, rate_err) if rate_err else text
        cond_lines.append(f"{utt}\txvector\t" + ",".join(f"{v:.6f}" for v in rng.normal(size=xvec_dim)))
        cond_lines.append(f"{utt}\tgst\t" + ",".join(f"{v:.6f}" for v in rng.normal(size=gst_dim)))
    m = Manifest(records)
    write_manifest(m, out / "orig.jsonl")
    write_hypotheses(hyps, out / "hyps.txt")
    (out / "cond.txt").write_text("\n".join(cond_lines) + "\n", encoding="utf-8")

    for j in range(4):
        n = rng.normal(size=rate * 2)
        n = scipy.signal.lfilter([1.0], [1.0, -0.7 + 0.3 * j], n)
        dsp.write_wav(out / "noise" / f"noise{j}.wav",
                      dsp.Waveform(0.3 * n / np.max(np.abs(n)), rate))
    for j in range(8):
        text = random_sentence(rng)
        w = stub_synthesize(text, seed=10_000 + j, sample_rate_hz=rate)
        y = scipy.signal.lfilter(COLORATION, [1.0], w.samples)
        noise = rng.normal(size=len(y))
        y = y + dsp.noise_gain(y, noise, 10.0) * noise
        dsp.write_wav(out / "noisy" / f"noisy{j}.wav", dsp.Waveform(0.5 * y / np.max(np.abs(y)), rate))
    (out / "corpus.json").write_text(json.dumps(
        {"utterances": len(m), "hours": m.total_hours, "seed": seed}, indent=2) + "\n")
    return m
