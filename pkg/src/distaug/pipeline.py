"""Config-driven pipeline: stage implementations shared by the standalone
subcommands and by ``run``, config validation and the run report."""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import math
import os
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np
import yaml

from . import cyclegan, dsp, plotting, pseudolabel, roomsim, specaug, ttsaug
from .errors import ConfigInvalid, DistaugError, SampleRateMismatch, StageFailed
from .manifest import (Manifest, ManifestRecord, assemble_combined, read_manifest, rebase,
                       resolve_audio, write_manifest)

log = logging.getLogger(__name__)

SEED_ENV = "DISTAUG_SEED"
REPORT_NAME = "report.json"


def stage_seed(root_seed: int, name: str) -> int:
    """Per-stage seed from a stable hash of the root seed and stage name."""
    h = hashlib.sha256(f"{int(root_seed)}/{name}".encode()).digest()
    return int.from_bytes(h[:4], "little")


def record_rng(seed: int, utt_id: str) -> np.random.Generator:
    h = hashlib.sha256(utt_id.encode()).digest()
    return np.random.default_rng([seed & 0xFFFFFFFF, int.from_bytes(h[:4], "little")])


@dataclass
class StageResult:
    artifacts: dict = field(default_factory=dict)  # name -> Path
    failures: list = field(default_factory=list)  # (utt_id, reason)
    details: dict = field(default_factory=dict)
    figures: list = field(default_factory=list)


def _manifest_audio(m: Manifest, manifest_path):
    for r in m:
        yield r, dsp.read_wav(resolve_audio(r, manifest_path))


def _write(m: Manifest, path) -> Path:
    write_manifest(m, path)
    return Path(path)


# ------------------------------------------------------------- operations

def do_toy_corpus(out_dir, seed=0, num_utts=120, sample_rate_hz=16000) -> StageResult:
    from .toy import make_toy_corpus

    out = Path(out_dir)
    m = make_toy_corpus(out, seed=seed, num_utts=num_utts, rate=sample_rate_hz)
    return StageResult(
        {"manifest": out / "orig.jsonl", "hyps": out / "hyps.txt", "cond": out / "cond.txt",
         "noise": out / "noise", "noisy": out / "noisy"},
        details={"utterances": len(m), "hours": m.total_hours})


def speed_id(utt_id: str, factor: float) -> str:
    return utt_id if factor == 1.0 else f"sp{factor:g}-{utt_id}"


def do_speed(in_manifest, factors, audio_dir, out_manifest, fmt="float32") -> StageResult:
    """Kaldi-style copies at every factor; the 1.0 copy keeps its id."""
    m = read_manifest(in_manifest)
    audio_dir, out_manifest = Path(audio_dir), Path(out_manifest)
    records = []
    for f in factors:
        for r, w in _manifest_audio(m, in_manifest):
            y = dsp.speed_perturb(w, float(f))
            uid = speed_id(r.utt_id, float(f))
            dst = audio_dir / f"{uid}.wav"
            dsp.write_wav(dst, y, fmt)
            rel = Path(os.path.relpath(dst, out_manifest.parent)).as_posix()
            records.append(ManifestRecord(uid, rel, len(y) / y.sample_rate_hz, r.text, r.source,
                                          r.speaker_id))
    return StageResult({"manifest": _write(Manifest(records), out_manifest)})


def do_rir(out_dir, count, seed, ranges=None) -> StageResult:
    out = Path(out_dir)
    rooms = []
    for i in range(count):
        cfg = roomsim.sample_room([seed & 0xFFFFFFFF, i], ranges)
        dsp.write_wav(out / f"rir{i:03d}.wav", roomsim.simulate_rir(cfg))
        rooms.append(cfg.to_dict())
    (out / "rooms.json").write_text(json.dumps(rooms, indent=1, sort_keys=True) + "\n")
    return StageResult({"rirs": out}, details={"count": count})


def _pool(path):
    if path is None:
        return None
    pool = ttsaug.load_pool(path)
    if not pool:
        raise ValueError(f"{path}: no WAV files")
    return pool


def do_tts_aug(in_manifest, cond, rirs, noise, snr, seed, audio_dir, out_manifest,
               engine="stub", jobs=1, fmt="float32", sample_rate_hz=16000) -> StageResult:
    m = read_manifest(in_manifest)
    table = ttsaug.read_conditioning(cond) if cond is not None else None
    rep = ttsaug.tts_augment(
        m, table, _pool(rirs), _pool(noise), tuple(snr), seed, audio_dir,
        engine=ttsaug.make_engine(engine, sample_rate_hz), rel_to=Path(out_manifest).parent,
        jobs=jobs, fmt=fmt, require_conditioning=table is not None)
    snrs = [d.snr_db for d in rep.draws if math.isfinite(d.snr_db)]
    errs = [abs(d.measured_snr_db - d.snr_db) for d in rep.draws if math.isfinite(d.snr_db)]
    return StageResult({"manifest": _write(rep.manifest, out_manifest)}, rep.failures,
                       {"snr_db_mean": float(np.mean(snrs)) if snrs else None,
                        "snr_max_abs_error_db": max(errs) if errs else None})


def do_mix(in_manifest, noise, rirs, snr, seed, audio_dir, out_manifest,
           fmt="float32") -> StageResult:
    """RIR and/or noise on existing audio; ids, texts and tags are kept."""
    m = read_manifest(in_manifest)
    rir_pool, noise_pool = _pool(rirs), _pool(noise)
    audio_dir, out_manifest = Path(audio_dir), Path(out_manifest)
    records, failures = [], []
    for r in m:
        try:
            w = dsp.read_wav(resolve_audio(r, in_manifest))
            y = ttsaug.perturb(w, record_rng(seed, r.utt_id), rir_pool, noise_pool, tuple(snr))[0]
            dst = audio_dir / f"{r.utt_id}.wav"
            dsp.write_wav(dst, y, fmt)
            rel = Path(os.path.relpath(dst, out_manifest.parent)).as_posix()
            records.append(ManifestRecord(r.utt_id, rel, len(y) / y.sample_rate_hz, r.text,
                                          r.source, r.speaker_id))
        except DistaugError as exc:
            failures.append((r.utt_id, f"{type(exc).__name__}: {exc}"))
    return StageResult({"manifest": _write(Manifest(records), out_manifest)}, failures)


def _load_waves(ref) -> list:
    ref = Path(ref)
    if ref.is_dir():
        return ttsaug.load_pool(ref)
    return [w for _, w in _manifest_audio(read_manifest(ref), ref)]


def do_cgan_train(clean, noisy, out_dir, seed, config=None, steps=200, learning_rate=2e-4,
                  batch_size=1, checkpoint_every=0, model_path=None) -> StageResult:
    out = Path(out_dir)
    ckpt = Path(model_path) if model_path else out / "model.ckpt"
    cfg = cyclegan.GanConfig.from_dict(config or {})
    clean_w, noisy_w = _load_waves(clean), _load_waves(noisy)
    for w in clean_w + noisy_w:
        if w.sample_rate_hz != cfg.sample_rate_hz:
            raise SampleRateMismatch(f"audio at {w.sample_rate_hz} Hz, model expects {cfg.sample_rate_hz} Hz")
    model = cyclegan.GanModel.build(cfg, seed)
    sched = cyclegan.TrainSchedule(steps=steps, learning_rate=learning_rate,
                                   batch_size=batch_size, seed=seed,
                                   checkpoint_every=checkpoint_every,
                                   checkpoint_dir=str(out / "checkpoints"))
    res = cyclegan.train(model, clean_w, noisy_w, sched)
    cyclegan.save_model(ckpt, res.model, res.g_opt, res.d_opt)
    cyclegan.write_history(res.history, out / "history.csv")
    figs = [plotting.loss_history(res.history, out / "loss.png")] if res.history else []
    last = res.history[-1] if res.history else {}
    return StageResult({"model": ckpt, "history": out / "history.csv"},
                       details={"steps": steps, "final_losses": last}, figures=figs)


def do_cgan_apply(model_path, in_manifest, audio_dir, out_manifest, fmt="float32") -> StageResult:
    model, _, _ = cyclegan.load_model(model_path)
    m = read_manifest(in_manifest)
    rep = cyclegan.augment_manifest_cgan(model, m, audio_dir, manifest_path=in_manifest,
                                         rel_to=Path(out_manifest).parent, fmt=fmt)
    return StageResult({"manifest": _write(rep.manifest, out_manifest)}, rep.failures)


def do_pl_filter(in_manifest, hyps, delta, out_manifest, exclude_exact=False,
                 count_spaces=True) -> StageResult:
    refs = read_manifest(in_manifest)
    m, summary = pseudolabel.filter_pseudo_labels(refs, pseudolabel.read_hypotheses(hyps), delta,
                                                  exclude_exact, count_spaces)
    m = rebase(m, in_manifest, out_manifest)
    return StageResult({"manifest": _write(m, out_manifest)}, details=summary.to_dict())


def do_pl_sweep(in_manifest, hyps, deltas, out_table, exclude_exact=False, base=None,
                figure=None) -> StageResult:
    refs = read_manifest(in_manifest)
    base_hours = read_manifest(base).total_hours if base is not None else 0.0
    rows = pseudolabel.threshold_sweep(refs, pseudolabel.read_hypotheses(hyps), deltas,
                                       exclude_exact, base_hours)
    out_table = Path(out_table)
    out_table.parent.mkdir(parents=True, exist_ok=True)
    lines = ["delta\tkept\tkept_hours\ttotal_hours"]
    lines += [f"{pseudolabel.format_delta(r.delta)}\t{r.kept}\t{r.kept_hours!r}\t{r.total_hours!r}"
              for r in rows]
    out_table.write_text("\n".join(lines) + "\n", encoding="utf-8")
    figs = [plotting.threshold_sweep(rows, figure)] if figure else []
    return StageResult({"table": out_table}, figures=figs,
                       details={"rows": [[pseudolabel.format_delta(r.delta), r.kept, r.kept_hours]
                                         for r in rows]})


def do_specaug(in_manifest, out_dir, seed, policy=None, stft=None) -> StageResult:
    """Masked log-magnitude features, one ``.npy`` per utterance."""
    pol = specaug.MaskPolicy(**(policy or {}))
    cfg = dsp.StftConfig(**(stft or {}))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    failures, index = [], []
    for r, w in _manifest_audio(read_manifest(in_manifest), in_manifest):
        feat = cyclegan.log_magnitude(dsp.stft(w, cfg), 1e-5)
        try:
            aug = specaug.apply_specaugment(feat, pol, record_rng(seed, r.utt_id))
        except DistaugError as exc:
            failures.append((r.utt_id, f"{type(exc).__name__}: {exc}"))
            continue
        np.save(out / f"{r.utt_id}.npy", aug)
        index.append(f"{r.utt_id}\t{r.utt_id}.npy\t{aug.shape[0]}\t{aug.shape[1]}")
    (out / "index.tsv").write_text("".join(line + "\n" for line in index), encoding="utf-8")
    return StageResult({"features": out}, failures)


def do_assemble(orig, out_manifest, tts=None, cgan=None, pl=None, figure=None) -> StageResult:
    parts = {}
    for role, path in (("orig", orig), ("tts", tts), ("cgan", cgan), ("pl", pl)):
        parts[role] = rebase(read_manifest(path), path, out_manifest) if path else Manifest()
    m = assemble_combined(parts["orig"], parts["tts"], parts["cgan"], parts["pl"])
    _write(m, out_manifest)
    figs = [plotting.hours_by_source(m.hours_by_source(), figure)] if figure else []
    return StageResult({"manifest": Path(out_manifest)}, figures=figs,
                       details={"provenance": m.provenance_counts,
                                "stage_sizes": {k: len(v) for k, v in parts.items()}})


# ------------------------------------------------------------ stage table

def _positive_int(v, name):
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise ValueError(f"{name} must be a positive integer")


def _snr(v):
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise ValueError("snr must be [low, high] in dB")
    lo, hi = float(v[0]), float(v[1])
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
        raise ValueError(f"snr range [{lo}, {hi}] is empty or not finite")


def _check_speed(p):
    fs = p["factors"]
    if not isinstance(fs, list) or not fs:
        raise ValueError("factors must be a non-empty list")
    if len(set(fs)) != len(fs):
        raise ValueError("factors must be distinct")
    for f in fs:
        if not 0.5 <= float(f) <= 2.0:
            raise ValueError(f"speed factor {f} outside [0.5, 2.0]")


def _check_rir(p):
    _positive_int(p["count"], "count")
    cfg = roomsim.sample_room(0, p["ranges"])  # raises on bad ranges
    roomsim.RoomConfig(**{**cfg.to_dict(), "max_order": 0})


def _check_cgan(p):
    cfg = cyclegan.GanConfig.from_dict(p["config"] or {})
    cyclegan.GanModel.build(cfg, 0)
    if isinstance(p["steps"], bool) or not isinstance(p["steps"], int) or p["steps"] < 0:
        raise ValueError("steps must be a non-negative integer")
    _positive_int(p["batch_size"], "batch_size")
    if not float(p["learning_rate"]) > 0:
        raise ValueError("learning_rate must be positive")


def _check_specaug(p):
    specaug.MaskPolicy(**(p["policy"] or {}))
    dsp.check_nola(dsp.StftConfig(**(p["stft"] or {})))


@dataclass(frozen=True)
class Op:
    required: tuple
    optional: tuple
    outputs: tuple
    params: dict  # name -> default
    check: Callable | None = None


OPS = {
    "toy-corpus": Op((), (), ("manifest", "hyps", "cond", "noise", "noisy"),
                     {"num_utts": 120, "sample_rate_hz": 16000},
                     check=lambda p: (_positive_int(p["num_utts"], "num_utts"),
                                      _positive_int(p["sample_rate_hz"], "sample_rate_hz"))),
    "speed": Op(("manifest",), (), ("manifest",), {"factors": [0.9, 1.0, 1.1], "fmt": "float32"},
                check=_check_speed),
    "rir": Op((), (), ("rirs",), {"count": 8, "ranges": None}, check=_check_rir),
    "tts-aug": Op(("manifest",), ("cond", "rirs", "noise"), ("manifest",),
                  {"snr": [5.0, 20.0], "engine": "stub", "fmt": "float32", "sample_rate_hz": 16000},
                  check=lambda p: (_snr(p["snr"]), ttsaug.make_engine(p["engine"]))),
    "mix": Op(("manifest",), ("noise", "rirs"), ("manifest",), {"snr": [5.0, 20.0], "fmt": "float32"},
              check=lambda p: _snr(p["snr"])),
    "cgan-train": Op(("clean", "noisy"), (), ("model", "history"),
                     {"config": None, "steps": 200, "learning_rate": 2e-4, "batch_size": 1,
                      "checkpoint_every": 0}, check=_check_cgan),
    "cgan-apply": Op(("model", "manifest"), (), ("manifest",), {"fmt": "float32"}),
    "pl-filter": Op(("manifest", "hyps"), (), ("manifest",),
                    {"delta": 50.0, "exclude_exact": False, "count_spaces": True},
                    check=lambda p: pseudolabel.parse_delta(p["delta"])),
    "pl-sweep": Op(("manifest", "hyps"), ("base",), ("table",),
                   {"deltas": [20, 50, 70, "inf"], "exclude_exact": False},
                   check=lambda p: [pseudolabel.parse_delta(d) for d in p["deltas"]]),
    "specaug": Op(("manifest",), (), ("features",), {"policy": None, "stft": None},
                  check=_check_specaug),
    "assemble": Op(("orig",), ("tts", "cgan", "pl"), ("manifest",), {}),
}

MANIFEST_ARTIFACTS = {"manifest"}


def _execute(op: str, inputs: dict, p: dict, seed: int, out: Path, jobs: int) -> StageResult:
    if op == "toy-corpus":
        return do_toy_corpus(out, seed, p["num_utts"], p["sample_rate_hz"])
    if op == "speed":
        return do_speed(inputs["manifest"], p["factors"], out / "wav", out / "manifest.jsonl",
                        p["fmt"])
    if op == "rir":
        return do_rir(out / "rirs", p["count"], seed, p["ranges"])
    if op == "tts-aug":
        return do_tts_aug(inputs["manifest"], inputs.get("cond"), inputs.get("rirs"),
                          inputs.get("noise"), p["snr"], seed, out / "wav",
                          out / "manifest.jsonl", p["engine"], jobs, p["fmt"],
                          p["sample_rate_hz"])
    if op == "mix":
        return do_mix(inputs["manifest"], inputs.get("noise"), inputs.get("rirs"), p["snr"], seed,
                      out / "wav", out / "manifest.jsonl", p["fmt"])
    if op == "cgan-train":
        return do_cgan_train(inputs["clean"], inputs["noisy"], out, seed, p["config"], p["steps"],
                             float(p["learning_rate"]), p["batch_size"], p["checkpoint_every"])
    if op == "cgan-apply":
        return do_cgan_apply(inputs["model"], inputs["manifest"], out / "wav",
                             out / "manifest.jsonl", p["fmt"])
    if op == "pl-filter":
        return do_pl_filter(inputs["manifest"], inputs["hyps"], p["delta"],
                            out / "manifest.jsonl", p["exclude_exact"], p["count_spaces"])
    if op == "pl-sweep":
        return do_pl_sweep(inputs["manifest"], inputs["hyps"], p["deltas"], out / "sweep.tsv",
                           p["exclude_exact"], inputs.get("base"), out / "sweep.png")
    if op == "specaug":
        return do_specaug(inputs["manifest"], out / "features", seed, p["policy"], p["stft"])
    if op == "assemble":
        return do_assemble(inputs["orig"], out / "combined.jsonl", inputs.get("tts"),
                           inputs.get("cgan"), inputs.get("pl"), out / "hours.png")
    raise AssertionError(op)


# ----------------------------------------------------------------- config

NAME_RE = re.compile(r"^[A-Za-z0-9_-]+$")


@dataclass
class StageSpec:
    name: str
    op: str
    inputs: dict
    params: dict


@dataclass
class PipelineConfig:
    seed: int
    stages: list
    paths: dict
    out_dir: Path | None
    jobs: int = 1


def _fail(path, reason):
    raise ConfigInvalid(path, reason)


def validate_config(raw, base_dir=".") -> PipelineConfig:
    """Check structure, references and every stage's parameters."""
    base_dir = Path(base_dir)
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        _fail("<root>", "config must be a mapping")
    unknown = set(raw) - {"seed", "stages", "paths", "out_dir", "jobs"}
    if unknown:
        _fail(sorted(unknown)[0], "unknown top-level key")
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        _fail("seed", "must be a non-negative integer")
    jobs = raw.get("jobs", 1)
    if isinstance(jobs, bool) or not isinstance(jobs, int) or jobs < 1:
        _fail("jobs", "must be a positive integer")
    paths = {}
    for key, val in (raw.get("paths") or {}).items():
        p = Path(val)
        p = p if p.is_absolute() else base_dir / p
        if not p.exists():
            _fail(f"paths.{key}", f"{p} does not exist")
        paths[key] = p
    out_dir = raw.get("out_dir")
    out_dir = (base_dir / out_dir) if out_dir is not None else None

    stages_raw = raw.get("stages") or []
    if not isinstance(stages_raw, list):
        _fail("stages", "must be a list")
    produced: dict = {}
    stages = []
    for i, s in enumerate(stages_raw):
        where = f"stages[{i}]"
        if not isinstance(s, dict):
            _fail(where, "stage must be a mapping")
        bad = set(s) - {"name", "op", "inputs", "params"}
        if bad:
            _fail(f"{where}.{sorted(bad)[0]}", "unknown stage key")
        name = s.get("name")
        if not isinstance(name, str) or not NAME_RE.match(name):
            _fail(f"{where}.name", "must match [A-Za-z0-9_-]+")
        if name in produced or name == "paths":
            _fail(f"{where}.name", f"duplicate or reserved stage name {name!r}")
        where = f"stages.{name}"
        op = s.get("op")
        if op not in OPS:
            _fail(f"{where}.op", f"unknown op {op!r}; expected one of {sorted(OPS)}")
        spec = OPS[op]
        inputs = s.get("inputs") or {}
        if not isinstance(inputs, dict):
            _fail(f"{where}.inputs", "must be a mapping")
        for role in spec.required:
            if role not in inputs:
                _fail(f"{where}.inputs.{role}", "required input missing")
        for role, ref in inputs.items():
            if role not in spec.required + spec.optional:
                _fail(f"{where}.inputs.{role}", f"{op} takes no input {role!r}")
            if not isinstance(ref, str) or "." not in ref:
                _fail(f"{where}.inputs.{role}", "reference must look like 'stage.artifact' or 'paths.key'")
            src, art = ref.split(".", 1)
            if src == "paths":
                if art not in paths:
                    _fail(f"{where}.inputs.{role}", f"undeclared path {art!r}")
            elif src not in produced:
                _fail(f"{where}.inputs.{role}", f"no earlier stage named {src!r}")
            elif art not in produced[src]:
                _fail(f"{where}.inputs.{role}", f"stage {src!r} has no output {art!r}")
        params = s.get("params") or {}
        if not isinstance(params, dict):
            _fail(f"{where}.params", "must be a mapping")
        for k in params:
            if k not in spec.params:
                _fail(f"{where}.params.{k}", f"unknown parameter for {op}")
        merged = {**copy.deepcopy(spec.params), **params}
        if spec.check is not None:
            try:
                spec.check(merged)
            except (ValueError, TypeError, KeyError, DistaugError) as exc:
                _fail(f"{where}.params", str(exc))
        produced[name] = set(spec.outputs)
        stages.append(StageSpec(name, op, dict(inputs), merged))
    return PipelineConfig(seed, stages, paths, out_dir, jobs)


def _set_override(raw: dict, dotted: str, value):
    keys = dotted.split(".")
    node = raw
    for i, k in enumerate(keys[:-1]):
        if k == "stages" and isinstance(node.get("stages"), list):
            name = keys[i + 1]
            match = [s for s in node["stages"] if isinstance(s, dict) and s.get("name") == name]
            if not match:
                raise ConfigInvalid(dotted, f"no stage named {name!r}")
            rest = keys[i + 2:]
            node = match[0]
            for k2 in rest[:-1]:
                node = node.setdefault(k2, {})
            if not rest:
                raise ConfigInvalid(dotted, "override must name a stage field")
            node[rest[-1]] = value
            return
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigInvalid(dotted, "override path crosses a non-mapping")
    node[keys[-1]] = value


def load_config(path, overrides=(), env=None) -> PipelineConfig:
    """Read YAML, apply ``key=value`` overrides and ``DISTAUG_SEED``."""
    env = os.environ if env is None else env
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigInvalid("<file>", str(exc)) from exc
    raw = raw if raw is not None else {}
    for item in overrides:
        if "=" not in item:
            raise ConfigInvalid(item, "override must be key=value")
        k, v = item.split("=", 1)
        if not isinstance(raw, dict):
            raise ConfigInvalid("<root>", "config must be a mapping")
        _set_override(raw, k.strip(), yaml.safe_load(v))
    if env.get(SEED_ENV):
        try:
            raw["seed"] = int(env[SEED_ENV])
        except ValueError as exc:
            raise ConfigInvalid(SEED_ENV, "must be an integer") from exc
    return validate_config(raw, path.parent)


def bundled_recipe() -> Path:
    return Path(str(resources.files("distaug") / "data" / "recipe.yaml"))


# ------------------------------------------------------------------- run

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_tree(path) -> str:
    """Digest over relative names and contents of every file below ``path``."""
    root = Path(path)
    h = hashlib.sha256()
    for p in sorted(q for q in root.rglob("*") if q.is_file()):
        h.update(p.relative_to(root).as_posix().encode())
        h.update(b"\0")
        h.update(sha256_file(p).encode())
    return h.hexdigest()


def describe_manifest(path, rel_root) -> dict:
    m = read_manifest(path)
    audio = hashlib.sha256()
    for r in m:
        audio.update(sha256_file(resolve_audio(r, path)).encode())
    return {
        "path": Path(os.path.relpath(path, rel_root)).as_posix(),
        "records": len(m),
        "hours": m.total_hours,
        "hours_by_source": m.hours_by_source(),
        "provenance": m.provenance_counts,
        "sha256": sha256_file(path),
        "audio_sha256": audio.hexdigest(),
    }


def describe_artifact(name, path, rel_root) -> dict:
    path = Path(path)
    if name in MANIFEST_ARTIFACTS:
        return describe_manifest(path, rel_root)
    rel = Path(os.path.relpath(path, rel_root)).as_posix()
    if path.is_dir():
        return {"path": rel, "sha256": sha256_tree(path)}
    return {"path": rel, "sha256": sha256_file(path)}


def _describe_input(ref, path) -> dict:
    """Inputs are identified by reference, not location, so reports from
    different output directories compare equal."""
    d = {"ref": ref}
    if Path(path).suffix == ".jsonl":
        desc = describe_manifest(path, Path(path).parent)
        del desc["path"]
        d.update(desc)
    return d


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    return v


def run_pipeline(cfg: PipelineConfig, out_dir=None) -> dict:
    """Execute stages in order and write ``report.json`` under ``out_dir``.

    Any exception inside a stage, or a stage whose every record failed,
    raises StageFailed.
    """
    out = Path(out_dir or cfg.out_dir or "distaug-run")
    out.mkdir(parents=True, exist_ok=True)
    resolved: dict = {("paths", k): v for k, v in cfg.paths.items()}
    report = {"seed": cfg.seed, "stages": []}
    for st in cfg.stages:
        seed = stage_seed(cfg.seed, st.name)
        inputs = {role: resolved[tuple(ref.split(".", 1))] for role, ref in st.inputs.items()}
        log.info("stage %s (%s) seed=%d", st.name, st.op, seed)
        try:
            res = _execute(st.op, inputs, st.params, seed, out / st.name, cfg.jobs)
        except Exception as exc:  # noqa: BLE001 - every stage error is fatal to the run
            raise StageFailed(st.name, f"{type(exc).__name__}: {exc}") from exc
        entry = {
            "name": st.name,
            "op": st.op,
            "seed": seed,
            "params": st.params,
            "inputs": {role: _describe_input(ref, inputs[role]) for role, ref in st.inputs.items()},
            "outputs": {k: describe_artifact(k, v, out) for k, v in res.artifacts.items()},
            "failures": [list(f) for f in res.failures],
            "details": res.details,
            "figures": [Path(os.path.relpath(f, out)).as_posix() for f in res.figures],
        }
        produced = entry["outputs"].get("manifest")
        if res.failures and produced is not None and produced["records"] == 0:
            raise StageFailed(st.name, f"all records failed; first: {res.failures[0][1]}")
        for k, v in res.artifacts.items():
            resolved[(st.name, k)] = Path(v)
        report["stages"].append(entry)
    (out / REPORT_NAME).write_text(
        json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return report
