"""Multi-discriminator Cycle-GAN on spectrogram subbands.

Two generators map normalized log-magnitude patches between a clean
domain S and a noisy domain X. Each domain has one patch discriminator
per contiguous frequency band. Training alternates a generator update
(minimizing both adversarial terms plus the weighted cycle loss) with a
discriminator update (maximizing the adversarial terms).
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import dsp
from .dsp import NormStats, StftConfig, Waveform
from .errors import (
    BandCountMismatch,
    CoverageMismatch,
    DivergenceDetected,
    EmptyCorpus,
    NonFiniteActivation,
    ShapeMismatch,
    TooShort,
)
from .manifest import Manifest, ManifestRecord, resolve_audio
from .nn import checkpoint as ckpt
from .nn.layers import (
    Conv2d,
    ConvTranspose2d,
    InstanceNorm,
    LeakyReLU,
    ReLU,
    ResidualBlock,
    Sigmoid,
    Tanh,
    _gain,
)
from .nn.network import Network
from .nn.optim import OptimizerState, opt_step

PROB_CLAMP = 1e-7
LOSS_FORMS = ("log", "lsgan")


# ---------------------------------------------------------------- subbands

@dataclass(frozen=True)
class SubbandSplit:
    num_bins: int
    num_bands_m: int = 3
    num_bands_n: int = 3

    def __post_init__(self):
        if self.num_bands_m < 1 or self.num_bands_n < 1:
            raise ValueError("band counts must be >= 1")
        if max(self.num_bands_m, self.num_bands_n) > self.num_bins:
            raise ValueError("more bands than frequency bins")

    def boundaries(self, side: str):
        """Half-open (start, stop) bin ranges; the first ``F mod k`` bands
        get one extra bin."""
        k = self.count(side)
        q, r = divmod(self.num_bins, k)
        out, start = [], 0
        for i in range(k):
            stop = start + q + (1 if i < r else 0)
            out.append((start, stop))
            start = stop
        return out

    def heights(self, side):
        return [b - a for a, b in self.boundaries(side)]

    def count(self, side):
        if side == "clean":
            return self.num_bands_m
        if side == "noisy":
            return self.num_bands_n
        raise ValueError(f"side must be 'clean' or 'noisy', got {side!r}")


def split_bands(patch, split: SubbandSplit, side: str):
    patch = np.asarray(patch)
    if patch.shape[-1] != split.num_bins:
        raise CoverageMismatch(f"patch has {patch.shape[-1]} bins, split covers {split.num_bins}")
    return [patch[..., a:b] for a, b in split.boundaries(side)]


def concat_bands(bands):
    return np.concatenate(bands, axis=-1)


# ------------------------------------------------------------------ losses

def _clamp(p):
    return np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)


def adv_loss_from_probs(real_probs, fake_probs, form="log") -> float:
    """Adversarial objective from per-band discriminator outputs.

    ``log``: sum_i E[log D_i(real)] + sum_i E[log(1 - D_i(fake))].
    ``lsgan``: -(sum_i E[(D_i(real) - 1)^2] + sum_i E[D_i(fake)^2]).
    Discriminators maximize both forms.
    """
    if len(real_probs) != len(fake_probs):
        raise BandCountMismatch(f"{len(real_probs)} real vs {len(fake_probs)} fake bands")
    total = 0.0
    for pr, pf in zip(real_probs, fake_probs):
        if form == "log":
            total += float(np.mean(np.log(_clamp(pr)))) + float(np.mean(np.log(1.0 - _clamp(pf))))
        elif form == "lsgan":
            total -= float(np.mean((pr - 1.0) ** 2)) + float(np.mean(pf ** 2))
        else:
            raise ValueError(f"unknown loss form {form!r}")
    return total


def _run_bank(d_bank, bands, keep=True):
    if len(bands) != len(d_bank):
        raise BandCountMismatch(f"{len(bands)} bands for {len(d_bank)} discriminators")
    outs, tapes = [], []
    for d, b in zip(d_bank, bands):
        y, t = d.forward(b, keep_trace=False)
        outs.append(y)
        tapes.append(t)
    return outs, tapes


def adv_loss(fake_bands, real_bands, d_bank, form="log") -> float:
    real, _ = _run_bank(d_bank, real_bands)
    fake, _ = _run_bank(d_bank, fake_bands)
    return adv_loss_from_probs(real, fake, form)


def _dreal(p, form):
    # d(objective)/dp for the real term
    if form == "log":
        c = _clamp(p)
        return np.where(c == p, 1.0 / c, 0.0) / p.size
    return -2.0 * (p - 1.0) / p.size


def _dfake(p, form):
    # d(objective)/dp for the fake term
    if form == "log":
        c = _clamp(p)
        return np.where(c == p, -1.0 / (1.0 - c), 0.0) / p.size
    return -2.0 * p / p.size


def _dgen(p, form):
    # d(generator loss)/dp, where the generator minimizes the fake term
    # (log) or E[(D(fake) - 1)^2] (lsgan)
    if form == "log":
        return _dfake(p, form)
    return 2.0 * (p - 1.0) / p.size


def cycle_loss(G, F, clean_batch, noisy_batch) -> float:
    """E|F(G(S)) - S| + E|G(F(X)) - X|, each mean-reduced over elements."""
    S, X = np.asarray(clean_batch), np.asarray(noisy_batch)
    rec_s, rec_x = F(G(S)), G(F(X))
    if rec_s.shape != S.shape or rec_x.shape != X.shape:
        raise ShapeMismatch("generators do not preserve patch shape")
    return float(np.mean(np.abs(rec_s - S))) + float(np.mean(np.abs(rec_x - X)))


# ----------------------------------------------------------------- models

@dataclass(frozen=True)
class GanConfig:
    patch_frames: int = 128
    sample_rate_hz: int = 16000
    stft: StftConfig = StftConfig()
    bands_m: int = 3
    bands_n: int = 3
    lambda_cyc: float = 10.0
    loss_form: str = "log"
    log_floor: float = 1e-5
    gen_channels: int = 32
    gen_down: int = 2
    gen_res: int = 4
    gen_outer_kernel: int = 7
    gen_norm: str = "all"
    gen_skip: bool = False
    output_scale: float = 3.0
    gen_out_gain: float = 0.1
    disc_channels: int = 64
    disc_layers: int = 4
    disc_kernel: int = 4
    disc_slope: float = 0.2

    def __post_init__(self):
        if self.loss_form not in LOSS_FORMS:
            raise ValueError(f"loss_form must be one of {LOSS_FORMS}")
        if self.lambda_cyc < 0:
            raise ValueError("lambda_cyc must be >= 0")
        if self.patch_frames < 1:
            raise ValueError("patch_frames must be >= 1")
        if self.gen_norm not in ("all", "inner", "residual"):
            raise ValueError("gen_norm must be 'all', 'inner' or 'residual'")

    @property
    def num_bins(self):
        return self.stft.num_bins

    def to_dict(self):
        d = asdict(self)
        d["stft"] = self.stft.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "stft" in d and isinstance(d["stft"], dict):
            d["stft"] = StftConfig(**d["stft"])
        return cls(**d)


def build_generator(cfg: GanConfig, rng, name="G") -> Network:
    """c7s1-k, stride-2 downsampling, residual blocks, transposed-conv
    upsampling, c7s1-1 with a scaled tanh.

    ``gen_norm`` controls where instance norm goes outside the residual
    blocks: ``all`` (every stage), ``inner`` (all but the first stage) or
    ``residual`` (nowhere else). Norm on the first stage makes the
    generator blind to a patch's overall level and scale. With
    ``gen_skip`` the whole stack becomes the body of one residual block,
    so the generator computes ``x + scale * tanh(body(x))``.
    """
    shape = (1, cfg.patch_frames, cfg.num_bins)
    k0 = cfg.gen_outer_kernel
    ch = cfg.gen_channels

    def norm(c, first=False):
        if cfg.gen_norm == "all" or (cfg.gen_norm == "inner" and not first):
            return [InstanceNorm(c)]
        return []

    layers = [Conv2d(1, ch, k0, 1, k0 // 2, rng=rng, gain=_gain("relu")), *norm(ch, True), ReLU()]
    sizes = [shape[1:]]
    for _ in range(cfg.gen_down):
        h, w = sizes[-1]
        sizes.append(((h - 1) // 2 + 1, (w - 1) // 2 + 1))
        layers += [Conv2d(ch, 2 * ch, 3, 2, 1, rng=rng, gain=_gain("relu")),
                   *norm(2 * ch), ReLU()]
        ch *= 2
    layers += [ResidualBlock(ch, 3, rng=rng) for _ in range(cfg.gen_res)]
    for i in range(cfg.gen_down):
        (h, w), (th, tw) = sizes[-1 - i], sizes[-2 - i]
        op = (th - ((h - 1) * 2 + 1), tw - ((w - 1) * 2 + 1))
        layers += [ConvTranspose2d(ch, ch // 2, 3, 2, 1, op, rng=rng, gain=_gain("relu")),
                   *norm(ch // 2), ReLU()]
        ch //= 2
    layers += [Conv2d(ch, 1, k0, 1, k0 // 2, rng=rng, gain=cfg.gen_out_gain),
               Tanh(cfg.output_scale)]
    if cfg.gen_skip:
        layers = [ResidualBlock(1, rng=rng, body=layers)]
    return Network(layers, shape, name)


def build_discriminator(cfg: GanConfig, band_height: int, rng, name="D") -> Network:
    """Strided patch classifier with leaky-relu and a sigmoid head.

    The first two convs have stride 2, the rest stride 1; every conv but
    the first and last is followed by instance norm.
    """
    k, p = cfg.disc_kernel, (cfg.disc_kernel - 1) // 2
    shape = (1, cfg.patch_frames, band_height)
    ch_in, ch = 1, cfg.disc_channels
    layers = []
    for i in range(cfg.disc_layers - 1):
        stride = 2 if i < 2 else 1
        layers.append(Conv2d(ch_in, ch, k, stride, p, rng=rng, gain=_gain("leaky_relu")))
        if i > 0:
            layers.append(InstanceNorm(ch))
        layers.append(LeakyReLU(cfg.disc_slope))
        ch_in, ch = ch, min(ch * 2, 8 * cfg.disc_channels)
    layers += [Conv2d(ch_in, 1, k, 1, p, rng=rng), Sigmoid()]
    return Network(layers, shape, name)


@dataclass
class GanModel:
    config: GanConfig
    G: Network
    F: Network
    D_X: list
    D_S: list
    clean_stats: NormStats | None = None
    noisy_stats: NormStats | None = None

    @property
    def split(self) -> SubbandSplit:
        return SubbandSplit(self.config.num_bins, self.config.bands_m, self.config.bands_n)

    @property
    def lambda_cyc(self):
        return self.config.lambda_cyc

    @classmethod
    def build(cls, config: GanConfig, seed=0) -> "GanModel":
        rng = np.random.default_rng(seed)
        split = SubbandSplit(config.num_bins, config.bands_m, config.bands_n)
        G = build_generator(config, rng, "G")
        F = build_generator(config, rng, "F")
        D_X = [build_discriminator(config, h, rng, f"D_X{i}") for i, h in enumerate(split.heights("noisy"))]
        D_S = [build_discriminator(config, h, rng, f"D_S{i}") for i, h in enumerate(split.heights("clean"))]
        return cls(config, G, F, D_X, D_S)

    def networks(self):
        return {"G": self.G, "F": self.F,
                **{f"D_X{i}": d for i, d in enumerate(self.D_X)},
                **{f"D_S{i}": d for i, d in enumerate(self.D_S)}}

    def generator_params(self):
        return self.G.params + self.F.params

    def discriminator_params(self):
        return [p for d in self.D_X + self.D_S for p in d.params]

    def copy_params(self):
        return {k: [p.copy() for p in n.params] for k, n in self.networks().items()}


@dataclass
class TrainBatch:
    clean_patches: np.ndarray  # N x 1 x T_p x F
    noisy_patches: np.ndarray

    def __post_init__(self):
        for a in (self.clean_patches, self.noisy_patches):
            if a.ndim != 4 or not np.all(np.isfinite(a)):
                raise ShapeMismatch("patches must be finite N x 1 x T x F arrays")
        if self.clean_patches.shape[-1] != self.noisy_patches.shape[-1]:
            raise ShapeMismatch("clean and noisy patches differ in F")


def total_loss(model: GanModel, batch: TrainBatch) -> dict:
    """Both adversarial terms, the cycle term and their weighted total."""
    S, X = batch.clean_patches, batch.noisy_patches
    split, form = model.split, model.config.loss_form
    fake_x, fake_s = model.G(S), model.F(X)
    adv_g = adv_loss(split_bands(fake_x, split, "noisy"), split_bands(X, split, "noisy"),
                     model.D_X, form)
    adv_f = adv_loss(split_bands(fake_s, split, "clean"), split_bands(S, split, "clean"),
                     model.D_S, form)
    cyc = cycle_loss(model.G, model.F, S, X)
    return {"adv_G": adv_g, "adv_F": adv_f, "cyc": cyc,
            "total": adv_g + adv_f + model.lambda_cyc * cyc}


# ----------------------------------------------------------------- features

def log_magnitude(spec: dsp.ComplexSpectrogram, floor: float) -> np.ndarray:
    return np.log(spec.magnitude + floor)


def waveform_features(w: Waveform, cfg: GanConfig) -> np.ndarray:
    if w.sample_rate_hz != cfg.sample_rate_hz:
        raise ValueError(f"expected {cfg.sample_rate_hz} Hz audio, got {w.sample_rate_hz} Hz")
    return log_magnitude(dsp.stft(w, cfg.stft), cfg.log_floor)


class PatchSampler:
    """Draws random fixed-length patches of normalized features."""

    def __init__(self, feats, stats: NormStats, patch_frames: int):
        self.feats = [dsp.normalize(f, stats) for f in feats if f.shape[0] >= patch_frames]
        if not self.feats:
            raise EmptyCorpus(f"no utterance has at least {patch_frames} frames")
        self.patch_frames = patch_frames

    def draw(self, rng, n):
        out = []
        for _ in range(n):
            f = self.feats[int(rng.integers(len(self.feats)))]
            t0 = int(rng.integers(0, f.shape[0] - self.patch_frames + 1))
            out.append(f[t0:t0 + self.patch_frames])
        return np.stack(out)[:, None]


# ---------------------------------------------------------------- training

@dataclass(frozen=True)
class TrainSchedule:
    steps: int = 2000
    learning_rate: float = 2e-4
    beta1: float = 0.5
    batch_size: int = 1
    seed: int = 0
    checkpoint_every: int = 0
    checkpoint_dir: str | None = None


@dataclass
class TrainResult:
    model: GanModel
    history: list
    g_opt: OptimizerState
    d_opt: OptimizerState


def _bank_backward(d_bank, tapes, grads_out, want_params):
    """Backprop per-band output grads; returns input grads and param grads."""
    gin, gparams = [], []
    for d, t, g in zip(d_bank, tapes, grads_out):
        gx, gp = d.backward(t, g)
        gin.append(gx)
        if want_params:
            gparams.extend(gp)
    return gin, gparams


def _add(a, b):
    return [x + y for x, y in zip(a, b)]


def generator_step(model: GanModel, S, X):
    """Loss breakdown and gradients for G and F (discriminators frozen)."""
    split, form, lam = model.split, model.config.loss_form, model.lambda_cyc
    G, F = model.G, model.F
    fake_x, t_g1 = G.forward(S, keep_trace=False)
    fake_s, t_f1 = F.forward(X, keep_trace=False)
    rec_s, t_f2 = F.forward(fake_x, keep_trace=False)
    rec_x, t_g2 = G.forward(fake_s, keep_trace=False)

    real_x_p, _ = _run_bank(model.D_X, split_bands(X, split, "noisy"))
    fake_x_p, fx_tapes = _run_bank(model.D_X, split_bands(fake_x, split, "noisy"))
    real_s_p, _ = _run_bank(model.D_S, split_bands(S, split, "clean"))
    fake_s_p, fs_tapes = _run_bank(model.D_S, split_bands(fake_s, split, "clean"))

    adv_g = adv_loss_from_probs(real_x_p, fake_x_p, form)
    adv_f = adv_loss_from_probs(real_s_p, fake_s_p, form)
    cyc = float(np.mean(np.abs(rec_s - S))) + float(np.mean(np.abs(rec_x - X)))
    losses = {"adv_G": adv_g, "adv_F": adv_f, "cyc": cyc, "total": adv_g + adv_f + lam * cyc}

    g_fake_x = concat_bands(_bank_backward(model.D_X, fx_tapes, [_dgen(p, form) for p in fake_x_p], False)[0])
    g_fake_s = concat_bands(_bank_backward(model.D_S, fs_tapes, [_dgen(p, form) for p in fake_s_p], False)[0])
    g_rec_s = lam * np.sign(rec_s - S) / S.size
    g_rec_x = lam * np.sign(rec_x - X) / X.size

    gx, gF2 = F.backward(t_f2, g_rec_s)
    g_fake_x = g_fake_x + gx
    gx, gG2 = G.backward(t_g2, g_rec_x)
    g_fake_s = g_fake_s + gx
    _, gG1 = G.backward(t_g1, g_fake_x)
    _, gF1 = F.backward(t_f1, g_fake_s)
    return losses, _add(gG1, gG2) + _add(gF1, gF2), (fake_x, fake_s)


def discriminator_step(model: GanModel, S, X, fake_x, fake_s):
    """Gradients of the negated adversarial objective w.r.t. all D params."""
    split, form = model.split, model.config.loss_form
    grads = []
    for bank, real, fake, side in ((model.D_X, X, fake_x, "noisy"), (model.D_S, S, fake_s, "clean")):
        rp, rt = _run_bank(bank, split_bands(real, split, side))
        fp, ft = _run_bank(bank, split_bands(fake, split, side))
        for d, p_r, t_r, p_f, t_f in zip(bank, rp, rt, fp, ft):
            _, g1 = d.backward(t_r, -_dreal(p_r, form))
            _, g2 = d.backward(t_f, -_dfake(p_f, form))
            grads.extend(_add(g1, g2))
    return grads


def fit_stats(model: GanModel, clean_corpus, noisy_corpus):
    cfg = model.config
    cf = [waveform_features(w, cfg) for w in clean_corpus]
    nf = [waveform_features(w, cfg) for w in noisy_corpus]
    model.clean_stats = NormStats.fit(cf)
    model.noisy_stats = NormStats.fit(nf)
    return cf, nf


def train(model: GanModel, clean_corpus, noisy_corpus, schedule: TrainSchedule = TrainSchedule(),
          g_opt: OptimizerState | None = None, d_opt: OptimizerState | None = None,
          on_step=None) -> TrainResult:
    """Alternating generator / discriminator Adam updates.

    Normalization statistics are fitted from the corpora if the model has
    none. Per-step losses are those of the generator forward pass, i.e.
    measured before that step's updates.
    """
    if not clean_corpus or not noisy_corpus:
        raise EmptyCorpus("both clean and noisy corpora must be non-empty")
    cfg = model.config
    if model.clean_stats is None or model.noisy_stats is None:
        cf, nf = fit_stats(model, clean_corpus, noisy_corpus)
    else:
        cf = [waveform_features(w, cfg) for w in clean_corpus]
        nf = [waveform_features(w, cfg) for w in noisy_corpus]
    clean = PatchSampler(cf, model.clean_stats, cfg.patch_frames)
    noisy = PatchSampler(nf, model.noisy_stats, cfg.patch_frames)

    kw = {"learning_rate": schedule.learning_rate, "beta1": schedule.beta1}
    g_opt = g_opt or OptimizerState.for_params(model.generator_params(), **kw)
    d_opt = d_opt or OptimizerState.for_params(model.discriminator_params(), **kw)
    rng = np.random.default_rng(schedule.seed)
    history = []
    for step in range(schedule.steps):
        S = clean.draw(rng, schedule.batch_size)
        X = noisy.draw(rng, schedule.batch_size)
        try:
            losses, g_grads, (fake_x, fake_s) = generator_step(model, S, X)
        except NonFiniteActivation as exc:
            raise DivergenceDetected(step, str(exc)) from exc
        if not all(math.isfinite(v) for v in losses.values()):
            raise DivergenceDetected(step, losses)
        opt_step(g_opt, model.generator_params(), g_grads)
        d_grads = discriminator_step(model, S, X, fake_x, fake_s)
        opt_step(d_opt, model.discriminator_params(), d_grads)
        history.append({"step": step, **losses})
        if on_step is not None:
            on_step(step, losses)
        if schedule.checkpoint_every and (step + 1) % schedule.checkpoint_every == 0:
            out = Path(schedule.checkpoint_dir or ".")
            save_model(out / f"step{step + 1:06d}.ckpt", model, g_opt, d_opt)
    return TrainResult(model, history, g_opt, d_opt)


HISTORY_FIELDS = ("step", "adv_G", "adv_F", "cyc", "total")


def write_history(history, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_FIELDS)
        for row in history:
            w.writerow([row["step"]] + [repr(float(row[k])) for k in HISTORY_FIELDS[1:]])


def read_history(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{"step": int(r["step"]), **{k: float(r[k]) for k in HISTORY_FIELDS[1:]}} for r in rows]


# ----------------------------------------------------------------- mapping

def crossfade_weights(n):
    return np.bartlett(n + 2)[1:-1]


def patch_starts(num_frames, patch_frames):
    if num_frames < patch_frames:
        raise TooShort(f"{num_frames} frames is shorter than one {patch_frames}-frame patch")
    hop = max(1, patch_frames // 2)
    starts = list(range(0, num_frames - patch_frames + 1, hop))
    if starts[-1] != num_frames - patch_frames:
        starts.append(num_frames - patch_frames)
    return starts


def apply_patchwise(net: Network, feats: np.ndarray, patch_frames: int, chunk: int = 16):
    """Run ``net`` on 50%-overlapping patches and cross-fade the outputs."""
    T = feats.shape[0]
    starts = patch_starts(T, patch_frames)
    w = crossfade_weights(patch_frames)[:, None]
    acc = np.zeros_like(feats)
    norm = np.zeros((T, 1))
    for i in range(0, len(starts), chunk):
        group = starts[i:i + chunk]
        batch = np.stack([feats[s:s + patch_frames] for s in group])[:, None]
        out = net(batch)[:, 0]
        for s, o in zip(group, out):
            acc[s:s + patch_frames] += w * o
            norm[s:s + patch_frames] += w
    return acc / norm


def map_clean_to_noisy(model: GanModel, w: Waveform, stft_cfg: StftConfig | None = None) -> Waveform:
    """stft -> log magnitude -> clean-normalize -> G -> noisy-denormalize
    -> recombine with the source phase -> istft."""
    cfg = model.config
    if stft_cfg is not None and stft_cfg != cfg.stft:
        raise ValueError("model was trained with a different STFT configuration")
    if model.clean_stats is None or model.noisy_stats is None:
        raise ValueError("model has no normalization statistics; train it first")
    spec = dsp.stft(w, cfg.stft)
    mapped = map_features(model, log_magnitude(spec, cfg.log_floor))
    mag = np.maximum(np.exp(mapped) - cfg.log_floor, 0.0)
    out = dsp.istft(spec.with_frames(mag * np.exp(1j * spec.phase)))
    return out


def map_features(model: GanModel, logmag: np.ndarray) -> np.ndarray:
    """G applied to a clean log-magnitude matrix, returned in noisy log units."""
    cfg = model.config
    feats = dsp.normalize(logmag, model.clean_stats)
    return dsp.denormalize(apply_patchwise(model.G, feats, cfg.patch_frames), model.noisy_stats)


def band_energy_profile(logmags, split: SubbandSplit, side="noisy") -> np.ndarray:
    """Mean log-energy (dB) per subband over all frames of the given
    log-magnitude matrices."""
    if isinstance(logmags, np.ndarray):
        logmags = [logmags]
    db = (20.0 / np.log(10.0)) * np.concatenate(logmags, axis=0)
    return np.array([float(np.mean(b)) for b in split_bands(db, split, side)])


def waveform_profile(waves, cfg: GanConfig, side="noisy") -> np.ndarray:
    split = SubbandSplit(cfg.num_bins, cfg.bands_m, cfg.bands_n)
    return band_energy_profile([waveform_features(w, cfg) for w in waves], split, side)


@dataclass
class AugmentReport:
    manifest: Manifest
    failures: list = field(default_factory=list)


def augment_manifest_cgan(model: GanModel, in_manifest: Manifest, out_dir, manifest_path=None,
                          rel_to=None, fmt="float32") -> AugmentReport:
    """Map every record's audio through G; texts are carried over verbatim.

    Relative input audio paths resolve against ``manifest_path``'s
    directory; output paths are written relative to ``rel_to`` when given.
    Per-record failures are collected, not raised.
    """
    out_dir = Path(out_dir)
    records, failures = [], []
    for r in in_manifest:
        try:
            src = resolve_audio(r, manifest_path) if manifest_path else Path(r.audio_path)
            w = dsp.read_wav(src)
            y = dsp.peak_normalize(map_clean_to_noisy(model, w))
            dst = out_dir / f"{r.utt_id}-cgan.wav"
            dsp.write_wav(dst, y, fmt)
            path = dst.relative_to(rel_to) if rel_to is not None else dst
            records.append(ManifestRecord(r.utt_id, str(path), len(y) / y.sample_rate_hz,
                                          r.text, "cgan", r.speaker_id))
        except Exception as exc:  # noqa: BLE001 - collected per record
            failures.append((r.utt_id, f"{type(exc).__name__}: {exc}"))
    return AugmentReport(Manifest(records), failures)


# -------------------------------------------------------------- checkpoint

def save_model(path, model: GanModel, g_opt=None, d_opt=None):
    meta = {"kind": "cyclegan", "config": model.config.to_dict(), "networks": {}}
    arrays = {}
    for key, net in model.networks().items():
        meta["networks"][key] = ckpt.network_meta(net)
        arrays.update(ckpt.network_arrays(net, key))
    for key, stats in (("clean_stats", model.clean_stats), ("noisy_stats", model.noisy_stats)):
        if stats is not None:
            arrays[f"{key}/mean"] = stats.mean
            arrays[f"{key}/std"] = stats.std
    for key, opt in (("g_opt", g_opt), ("d_opt", d_opt)):
        if opt is not None:
            meta[key] = ckpt.optimizer_meta(opt)
            arrays.update(ckpt.optimizer_arrays(opt, key))
    ckpt.save_container(path, meta, arrays)


def load_model(path):
    """Returns ``(model, g_opt, d_opt)``; optimizers may be None."""
    meta, arrays = ckpt.load_container(path)
    if meta.get("kind") != "cyclegan":
        raise ValueError(f"{path}: not a Cycle-GAN checkpoint")
    cfg = GanConfig.from_dict(meta["config"])
    nets = {k: ckpt.network_from(m, arrays, k) for k, m in meta["networks"].items()}
    nx = len([k for k in nets if k.startswith("D_X")])
    ns = len([k for k in nets if k.startswith("D_S")])
    stats = {}
    for key in ("clean_stats", "noisy_stats"):
        if f"{key}/mean" in arrays:
            stats[key] = NormStats(arrays[f"{key}/mean"], arrays[f"{key}/std"])
    model = GanModel(cfg, nets["G"], nets["F"], [nets[f"D_X{i}"] for i in range(nx)],
                     [nets[f"D_S{i}"] for i in range(ns)], stats.get("clean_stats"),
                     stats.get("noisy_stats"))
    g_opt = ckpt.optimizer_from(meta["g_opt"], arrays, "g_opt") if "g_opt" in meta else None
    d_opt = ckpt.optimizer_from(meta["d_opt"], arrays, "d_opt") if "d_opt" in meta else None
    return model, g_opt, d_opt


def identity_model(config: GanConfig, seed=0) -> GanModel:
    """Model whose generators are the identity map (empty layer lists)."""
    m = GanModel.build(config, seed)
    shape = (1, config.patch_frames, config.num_bins)
    m.G = Network([], shape, "G")
    m.F = Network([], shape, "F")
    return m


def with_config(model: GanModel, **changes) -> GanModel:
    return replace(model, config=replace(model.config, **changes))
