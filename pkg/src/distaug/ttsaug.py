"""Synthetic (audio, text) pairs: a synthesis-engine boundary, a
deterministic stub synthesizer, and the RIR + additive-noise chain that
turns synthesized speech into distant-talk training data."""

from __future__ import annotations

import hashlib
import io
import json
import math
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.io.wavfile

from . import dsp
from .dsp import Waveform
from .errors import EngineUnreachable, MalformedRecord, SynthesisFailed
from .manifest import Manifest, ManifestRecord

KINDS = ("xvector", "gst")


@dataclass(frozen=True)
class ConditioningVector:
    kind: str
    values: np.ndarray
    source_utt: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"conditioning kind must be one of {KINDS}, got {self.kind!r}")
        v = np.asarray(self.values, dtype=np.float64).ravel()
        if v.size == 0 or not np.all(np.isfinite(v)):
            raise ValueError(f"{self.source_utt}: {self.kind} must be a non-empty finite vector")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def to_list(self):
        return [float(x) for x in self.values]


@dataclass(frozen=True)
class SynthesisRequest:
    text: str
    xvector: ConditioningVector | None = None
    gst: ConditioningVector | None = None
    seed: int = 0

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise ValueError("synthesis text must be non-empty")


def read_conditioning(path, dims: dict | None = None) -> dict:
    """Parse ``utt_id<TAB>kind<TAB>v1,v2,...`` lines.

    Returns ``{utt_id: {kind: ConditioningVector}}``. Without ``dims`` every
    vector of a kind must have the length of the first one seen.
    """
    dims = dict(dims or {})
    table: dict = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise MalformedRecord(n, "expected utt_id, kind and values separated by tabs")
            utt, kind, raw = parts
            try:
                vec = ConditioningVector(kind, [float(x) for x in raw.split(",")], utt)
            except ValueError as exc:
                raise MalformedRecord(n, str(exc)) from exc
            want = dims.setdefault(kind, vec.values.size)
            if vec.values.size != want:
                raise MalformedRecord(n, f"{kind} has {vec.values.size} values, expected {want}")
            table.setdefault(utt, {})[kind] = vec
    return table


# ---------------------------------------------------------------- engines

def _stable_int(*parts) -> int:
    h = hashlib.sha256("\x1f".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(h[:8], "little")


def stub_synthesize(text: str, seed: int = 0, sample_rate_hz: int = 16000,
                    symbol_s: float = 0.06) -> Waveform:
    """Deterministic speech-like signal: one tone segment per character.

    Duration is exactly ``len(text) * round(symbol_s * rate)`` samples.
    Letters map to a fundamental plus two harmonics; spaces are near-silent.
    """
    if not text:
        raise ValueError("cannot synthesize empty text")
    seg = int(round(symbol_s * sample_rate_hz))
    rng = np.random.default_rng(_stable_int("stub", text, seed))
    t = np.arange(seg) / sample_rate_hz
    env = np.hanning(seg)
    out = np.empty(seg * len(text))
    nyq = sample_rate_hz / 2
    for i, ch in enumerate(text):
        if ch.isspace():
            y = 1e-3 * rng.standard_normal(seg)
        else:
            f0 = 110.0 + 9.0 * (ord(ch.lower()) % 32)
            amp = rng.uniform(0.6, 1.0)
            y = np.zeros(seg)
            for h, a in ((1, 1.0), (2, 0.5), (3, 0.25)):
                if h * f0 < nyq:
                    y += a * np.sin(2 * np.pi * h * f0 * t + rng.uniform(0, 2 * np.pi))
            y = amp * env * y / 1.75 + 1e-3 * rng.standard_normal(seg)
        out[i * seg:(i + 1) * seg] = y
    return Waveform(0.5 * out, sample_rate_hz)


@dataclass
class StubEngine:
    sample_rate_hz: int = 16000
    symbol_s: float = 0.06

    def synthesize(self, req: SynthesisRequest) -> Waveform:
        return stub_synthesize(req.text, req.seed, self.sample_rate_hz, self.symbol_s)


@dataclass
class EndpointEngine:
    """HTTP engine: POST a JSON request, receive a WAV body.

    Request body: ``{"text", "xvector", "gst", "seed", "sample_rate_hz"}``.
    """

    url: str
    sample_rate_hz: int = 16000
    timeout_s: float = 60.0

    def synthesize(self, req: SynthesisRequest) -> Waveform:
        body = json.dumps({
            "text": req.text,
            "xvector": req.xvector.to_list() if req.xvector is not None else None,
            "gst": req.gst.to_list() if req.gst is not None else None,
            "seed": int(req.seed),
            "sample_rate_hz": self.sample_rate_hz,
        }).encode()
        http = urllib.request.Request(self.url, data=body, method="POST",
                                      headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(http, timeout=self.timeout_s) as resp:
                payload = resp.read()
        except urllib.error.HTTPError as exc:
            raise SynthesisFailed(req.text, f"HTTP {exc.code}") from exc
        except (urllib.error.URLError, OSError) as exc:
            raise EngineUnreachable(f"{self.url}: {exc}") from exc
        try:
            rate, data = scipy.io.wavfile.read(io.BytesIO(payload))
        except ValueError as exc:
            raise SynthesisFailed(req.text, f"bad WAV payload: {exc}") from exc
        if data.dtype == np.int16:
            data = data.astype(np.float64) / 32768.0
        return Waveform(np.asarray(data, dtype=np.float64).ravel(), rate)


def make_engine(spec: str, sample_rate_hz: int = 16000):
    """``"stub"`` or an ``http(s)://`` URI."""
    if spec == "stub":
        return StubEngine(sample_rate_hz)
    if spec.startswith(("http://", "https://")):
        return EndpointEngine(spec, sample_rate_hz)
    raise ValueError(f"engine must be 'stub' or an http(s) URI, got {spec!r}")


def synthesize(req: SynthesisRequest, engine) -> Waveform:
    fn = engine.synthesize if hasattr(engine, "synthesize") else engine
    try:
        w = fn(req)
    except (EngineUnreachable, SynthesisFailed):
        raise
    except Exception as exc:  # noqa: BLE001 - engine faults become SynthesisFailed
        raise SynthesisFailed(req.text, exc) from exc
    if not isinstance(w, Waveform) or len(w) == 0:
        raise SynthesisFailed(req.text, "engine returned an empty waveform")
    return w


# ---------------------------------------------------------- augmentation

def load_pool(directory) -> list:
    """All ``*.wav`` files under ``directory`` in sorted order."""
    paths = sorted(Path(directory).glob("*.wav"))
    return [dsp.read_wav(p) for p in paths]


@dataclass
class Draw:
    """Per-record perturbation choices, for audit and testing."""

    utt_id: str
    synth_seed: int
    rir_index: int | None
    noise_index: int | None
    noise_offset: int
    snr_db: float
    measured_snr_db: float


@dataclass
class TtsReport:
    manifest: Manifest
    failures: list = field(default_factory=list)
    draws: list = field(default_factory=list)


def perturb(w, rng, rir_pool, noise_pool, snr_range):
    """RIR (if a pool is given), then noise at a drawn SNR, then peak
    normalization, which scales speech and noise alike."""
    rir_i = noise_i = None
    offset, snr, measured = 0, math.inf, math.inf
    if rir_pool is not None:
        rir_i = int(rng.integers(len(rir_pool)))
        w = dsp.convolve_rir(w, rir_pool[rir_i])
    if noise_pool is not None:
        noise_i = int(rng.integers(len(noise_pool)))
        noise = noise_pool[noise_i]
        offset = int(rng.integers(len(noise)))
        noise = Waveform(np.roll(noise.samples, -offset), noise.sample_rate_hz)
        snr = float(rng.uniform(*snr_range))
        mixed = dsp.mix_at_snr(w, noise, snr)
        measured = dsp.measured_snr_db(w.samples, mixed.samples)
        w = mixed
    return dsp.peak_normalize(w), rir_i, noise_i, offset, snr, measured


def tts_augment(manifest_in: Manifest, conditioning: dict | None, rir_pool, noise_pool,
                snr_range, seed: int, out_dir, engine=None, rel_to=None, jobs: int = 1,
                fmt: str = "float32", require_conditioning: bool = True) -> TtsReport:
    """Synthesize every reference text and apply RIR then additive noise.

    ``rir_pool`` or ``noise_pool`` set to None disables that stage; an empty
    pool is an error. Draws come from a generator keyed on ``(seed, utt_id)``
    so results do not depend on record order or ``jobs``. Output records
    keep the input utt_id and text and are tagged ``tts``.
    """
    for name, pool in (("rir_pool", rir_pool), ("noise_pool", noise_pool)):
        if pool is not None and len(pool) == 0:
            raise ValueError(f"{name} is empty; pass None to disable that stage")
    lo, hi = snr_range
    if lo > hi:
        raise ValueError(f"snr_range low {lo} exceeds high {hi}")
    engine = engine if engine is not None else StubEngine()
    out_dir = Path(out_dir)
    conditioning = conditioning or {}

    def one(r: ManifestRecord):
        cond = conditioning.get(r.utt_id, {})
        if require_conditioning and not all(k in cond for k in KINDS):
            raise SynthesisFailed(r.text, f"no x-vector/GST conditioning for {r.utt_id}")
        rng = np.random.default_rng([seed & 0xFFFFFFFF, _stable_int("tts", r.utt_id) & 0xFFFFFFFF])
        synth_seed = int(rng.integers(2**31))
        req = SynthesisRequest(r.text, cond.get("xvector"), cond.get("gst"), synth_seed)
        w = synthesize(req, engine)
        y, rir_i, noise_i, offset, snr, measured = perturb(w, rng, rir_pool, noise_pool, (lo, hi))
        dst = out_dir / f"{r.utt_id}-tts.wav"
        dsp.write_wav(dst, y, fmt)
        path = dst.relative_to(rel_to) if rel_to is not None else dst
        rec = ManifestRecord(r.utt_id, str(path), len(y) / y.sample_rate_hz, r.text, "tts",
                             r.speaker_id)
        return rec, Draw(r.utt_id, synth_seed, rir_i, noise_i, offset, snr, measured)

    def guarded(r):
        try:
            return one(r)
        except Exception as exc:  # noqa: BLE001 - collected per record
            return exc

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(guarded, manifest_in))
    else:
        results = [guarded(r) for r in manifest_in]

    records, draws, failures = [], [], []
    for r, res in zip(manifest_in, results):
        if isinstance(res, Exception):
            failures.append((r.utt_id, f"{type(res).__name__}: {res}"))
        else:
            records.append(res[0])
            draws.append(res[1])
    return TtsReport(Manifest(records), failures, draws)
