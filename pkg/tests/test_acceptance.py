"""Acceptance criteria 1 to 11, each tagged with ``criterion(n, title)``.

The conftest prints one PASS/FAIL line per criterion after the run.
"""

import dataclasses
import math
import string
import time

import numpy as np
import pytest

from distaug import cyclegan as cg
from distaug import dsp, nn, pipeline, pseudolabel, roomsim
from distaug.dsp import Waveform
from distaug.manifest import Manifest, ManifestRecord, read_manifest, resolve_audio
from distaug.toy import run_toy_benchmark, toy_gan_config
from nn_cases import KINDS, worst_errors
from oracles import dominant_frequency, edit_distance_oracle, snr_db

criterion = pytest.mark.criterion


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


# ---------------------------------------------------------------- 1

@criterion(1, "gradient check, every layer kind, 20 instances, rel err <= 1e-4")
def test_gradient_correctness():
    with Timer() as t:
        worst = worst_errors(instances=20, seed=0)
    assert set(worst) == set(KINDS)
    for kind, err in worst.items():
        assert err <= 1e-4, f"{kind}: {err:.3g}"
    assert t.seconds < 120


# ---------------------------------------------------------------- 2

@criterion(2, "closed-form adversarial, cycle and total losses")
def test_loss_closed_forms():
    with Timer() as t:
        cfg = toy_gan_config(lambda_cyc=0.0)
        model = cg.identity_model(cfg, 0)
        for d in model.D_X + model.D_S:
            for p in d.layers[-2].params:
                p[:] = 0.0  # sigmoid(0) == 0.5 everywhere
        rng = np.random.default_rng(0)
        S = rng.normal(size=(2, 1, cfg.patch_frames, cfg.num_bins))
        X = rng.normal(size=S.shape)
        split = model.split
        adv = cg.adv_loss(cg.split_bands(model.G(S), split, "noisy"),
                          cg.split_bands(X, split, "noisy"), model.D_X)
        assert abs(adv - 2 * cfg.bands_n * math.log(0.5)) <= 1e-9
        assert cg.cycle_loss(model.G, model.F, S, X) == 0.0

        trained = cg.GanModel.build(cfg, 1)
        parts = cg.total_loss(trained, cg.TrainBatch(S, X))
        assert abs(parts["total"] - (parts["adv_G"] + parts["adv_F"])) <= 1e-9
    assert t.seconds < 10


# ----------------------------------------------------------- 3 and 11

@pytest.fixture(scope="module")
def toy_runs():
    with Timer() as t:
        first = run_toy_benchmark(steps=2000, seed=0)
    second = run_toy_benchmark(steps=2000, seed=0)
    return first, second, t.seconds


@criterion(3, "toy Cycle-GAN: cycle <= 0.2x initial, profile >= 50% closer, bit-exact history")
def test_toy_cyclegan(toy_runs, tmp_path):
    first, second, seconds = toy_runs
    assert len(first.history) == 2000
    assert seconds < 600
    assert first.cycle_ratio <= 0.2, f"cycle ratio {first.cycle_ratio:.3f}"
    assert first.profile_improvement >= 0.5, f"improvement {first.profile_improvement:.3f}"
    cg.write_history(first.history, tmp_path / "a.csv")
    cg.write_history(second.history, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


# ---------------------------------------------------------------- 4

@criterion(4, "edit distance equals brute-force oracle on 1000 pairs")
def test_cer_oracle():
    with Timer() as t:
        rng = np.random.default_rng(4)
        letters = np.array(list("abcdefg "))
        for _ in range(1000):
            a = "".join(rng.choice(letters, int(rng.integers(0, 41))))
            b = "".join(rng.choice(letters, int(rng.integers(0, 41))))
            assert pseudolabel.edit_distance(a, b).edits == edit_distance_oracle(a, b)
        assert pseudolabel.edit_distance("kitten", "sitting").edits == 3
    assert t.seconds < 5


# ---------------------------------------------------------------- 5

@criterion(5, "threshold sweep kept hours monotone, unbounded threshold keeps all")
def test_threshold_sweep_structure():
    rng = np.random.default_rng(5)
    recs, hyps = [], {}
    for i in range(300):
        ref = "".join(rng.choice(list(string.ascii_lowercase + " "), int(rng.integers(5, 40)))).strip() or "a"
        hyp = list(ref)
        for _ in range(int(rng.poisson(len(ref) * rng.uniform(0, 0.9)))):
            j = int(rng.integers(len(hyp) + 1))
            op = rng.integers(3)
            if op == 0 and hyp and j < len(hyp):
                hyp[j] = "#"
            elif op == 1 and hyp and j < len(hyp):
                del hyp[j]
            else:
                hyp.insert(j, "#")
        recs.append(ManifestRecord(f"u{i:03d}", f"u{i}.wav", float(rng.uniform(1, 15)), ref, "orig"))
        hyps[f"u{i:03d}"] = "".join(hyp)
    refs = Manifest(recs)
    rows = pseudolabel.threshold_sweep(refs, hyps, [20, 50, 70, "inf"], base_hours=1.0)
    kept = [r.kept_hours for r in rows]
    assert all(a <= b for a, b in zip(kept, kept[1:]))
    assert len({r.kept for r in rows}) > 1
    assert rows[-1].kept == len(refs)
    assert rows[-1].kept_hours == pytest.approx(refs.total_hours, abs=1e-12)
    totals = [r.total_hours for r in rows]
    assert totals == sorted(totals)


# ---------------------------------------------------------------- 6

@criterion(6, "STFT round trip >= 40 dB on 100 random signals")
def test_stft_round_trip():
    with Timer() as t:
        rng = np.random.default_rng(6)
        worst = math.inf
        for _ in range(100):
            x = rng.normal(size=int(rng.integers(1000, 32000)))
            y = dsp.istft(dsp.stft(Waveform(x, 16000))).samples
            assert len(y) == len(x)
            worst = min(worst, snr_db(x, y))
    assert worst >= 40.0, f"worst {worst:.1f} dB"
    assert t.seconds < 30


# ---------------------------------------------------------------- 7

@criterion(7, "speed perturbation length and frequency scaling")
def test_speed_perturbation():
    with Timer() as t:
        rate, n = 16000, 16000
        for f0 in (300.0, 440.0, 1000.0):
            x = np.sin(2 * np.pi * f0 * np.arange(n) / rate)
            for factor in (0.9, 1.0, 1.1):
                y = dsp.speed_perturb(Waveform(x, rate), factor).samples
                assert abs(len(y) - round(n / factor)) <= 1
                peak, bin_hz = dominant_frequency(y, rate)
                assert abs(peak - factor * f0) <= bin_hz
    assert t.seconds < 10


# ---------------------------------------------------------------- 8

@criterion(8, "room simulator direct path delay and 1/(4 pi d) amplitude, full absorption")
def test_room_simulator():
    with Timer() as t:
        for i in range(100):
            cfg = roomsim.sample_room([8, i])
            d = cfg.direct_distance_m
            delay = round(cfg.sample_rate_hz * d / cfg.speed_of_sound_mps)
            amp = 1.0 / (4 * math.pi * d)

            direct = roomsim.simulate_rir(dataclasses.replace(cfg, max_order=0)).samples
            assert int(np.argmax(np.abs(direct))) == delay
            assert abs(direct.sum() - amp) <= 0.01 * amp

            tap = roomsim.simulate_rir(dataclasses.replace(cfg, max_order=0,
                                                           fractional_delay=False)).samples
            assert int(np.argmax(tap)) == delay
            assert abs(tap[delay] - amp) <= 0.01 * amp

            full = roomsim.simulate_rir(cfg).samples
            # nothing arrives before the direct path's interpolation window
            assert not np.any(full[:max(0, delay - 4)])

            absorbed = dataclasses.replace(cfg, absorption=1.0)
            assert np.array_equal(roomsim.simulate_rir(absorbed).samples, direct)
    assert t.seconds < 30


# ---------------------------------------------------------------- 9

@criterion(9, "mixing SNR within 0.01 dB for targets in [-10, 40] dB")
def test_snr_mixing():
    rng = np.random.default_rng(9)
    for target in np.linspace(-10, 40, 101):
        s = Waveform(rng.normal(size=int(rng.integers(200, 20000))), 16000)
        noise = Waveform(rng.normal(size=int(rng.integers(50, 20000))), 16000)
        mixed = dsp.mix_at_snr(s, noise, float(target))
        assert abs(dsp.measured_snr_db(s.samples, mixed.samples) - target) <= 0.01


# ---------------------------------------------------------- 10 and 11

@pytest.fixture(scope="module")
def recipe_runs(tmp_path_factory):
    outs = []
    for name in ("a", "b"):
        out = tmp_path_factory.mktemp(f"recipe_{name}")
        cfg = pipeline.load_config(pipeline.bundled_recipe(), env={})
        with Timer() as t:
            report = pipeline.run_pipeline(cfg, out)
        outs.append((out, report, t.seconds))
    return outs


@criterion(10, "end-to-end recipe on the toy corpus, provenance and audio round trip")
def test_end_to_end(recipe_runs):
    out, report, seconds = recipe_runs[0]
    assert seconds < 15 * 60
    stages = {s["name"]: s for s in report["stages"]}
    corpus_min = stages["corpus"]["details"]["hours"] * 60
    assert 4.0 <= corpus_min <= 6.0
    ops = [s["op"] for s in report["stages"]]
    for op in ("speed", "rir", "tts-aug", "cgan-apply", "pl-filter", "assemble"):
        assert op in ops
    combined_stage = next(s for s in report["stages"] if s["op"] == "assemble")
    inputs = combined_stage["inputs"]
    expected = {}
    for role, desc in inputs.items():
        producer = desc["ref"].split(".", 1)[0]
        n = stages[producer]["outputs"]["manifest"]["records"]
        expected["orig" if role == "orig" else role] = n
    combined_path = out / combined_stage["name"] / "combined.jsonl"
    combined = read_manifest(combined_path)
    assert combined.provenance_counts == expected
    assert len(combined) == sum(expected.values())
    for r in combined:
        w = dsp.read_wav(resolve_audio(r, combined_path))
        assert len(w) > 0 and np.all(np.isfinite(w.samples))
        assert len(w) / w.sample_rate_hz == pytest.approx(r.duration_s, abs=1e-9)


@criterion(11, "determinism: byte-identical manifests and loss histories")
def test_determinism(recipe_runs, toy_runs, tmp_path):
    (a, _, _), (b, _, _) = recipe_runs
    files = sorted(p.relative_to(a) for p in a.rglob("*")
                   if p.suffix in (".jsonl", ".csv", ".json", ".tsv", ".wav", ".ckpt"))
    assert any(p.suffix == ".jsonl" for p in files)
    assert any(p.name == "history.csv" for p in files)
    for rel in files:
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel
    first, second, _ = toy_runs
    cg.write_history(first.history, tmp_path / "a.csv")
    cg.write_history(second.history, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
