"""``distaug`` command line. Exit codes: 0 ok, 2 config error, 3 stage failure."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import yaml

from . import pipeline
from .errors import ConfigInvalid, DistaugError, StageFailed

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 2, 3


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _range(text):
    lo, _, hi = text.partition(":")
    try:
        return [float(lo), float(hi)]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected LO:HI, got {text!r}") from exc


def _yaml_file(path):
    if path is None:
        return None
    return yaml.safe_load(Path(path).read_text(encoding="utf-8"))


def _seed(args):
    env = os.environ.get(pipeline.SEED_ENV)
    return int(env) if env else args.seed


def _print_result(res: pipeline.StageResult):
    out = {
        "artifacts": {k: str(v) for k, v in res.artifacts.items()},
        "failures": [list(f) for f in res.failures],
        "details": res.details,
        "figures": [str(f) for f in res.figures],
    }
    print(json.dumps(pipeline._jsonable(out), indent=2, sort_keys=True))


def cmd_run(args):
    path = Path(args.config) if args.config else pipeline.bundled_recipe()
    cfg = pipeline.load_config(path, args.set)
    if args.jobs:
        cfg.jobs = args.jobs
    out = Path(args.out) if args.out else None
    report = pipeline.run_pipeline(cfg, out)
    dest = out or cfg.out_dir or Path("distaug-run")
    print(f"{len(report['stages'])} stages ok; report at {dest / pipeline.REPORT_NAME}")


def cmd_assemble(args):
    return pipeline.do_assemble(args.orig, args.out, args.tts, args.cgan, args.pl, args.figure)


def cmd_rir(args):
    return pipeline.do_rir(args.out_dir, args.count, _seed(args), _yaml_file(args.ranges))


def cmd_tts_aug(args):
    return pipeline.do_tts_aug(args.inp, args.cond, args.rirs, args.noise, args.snr, _seed(args),
                               args.out_dir, args.out, args.engine, args.jobs, args.fmt,
                               args.rate)


def cmd_cgan_train(args):
    if not (args.out or args.out_dir):
        raise ValueError("one of --out or --out-dir is required")
    out_dir = args.out_dir or str(Path(args.out).parent)
    return pipeline.do_cgan_train(args.clean, args.noisy, out_dir, _seed(args),
                                  _yaml_file(args.config), args.steps, args.lr, args.batch_size,
                                  args.checkpoint_every, args.out)


def cmd_cgan_apply(args):
    return pipeline.do_cgan_apply(args.model, args.inp, args.out_dir, args.out, args.fmt)


def cmd_pl_filter(args):
    return pipeline.do_pl_filter(args.inp, args.hyps, args.delta, args.out, args.exclude_exact,
                                 not args.no_spaces)


def cmd_pl_sweep(args):
    return pipeline.do_pl_sweep(args.inp, args.hyps, args.deltas.split(","), args.out,
                                args.exclude_exact, args.base, args.figure)


def cmd_speed(args):
    return pipeline.do_speed(args.inp, _floats(args.factors), args.out_dir, args.out, args.fmt)


def cmd_mix(args):
    return pipeline.do_mix(args.inp, args.noise, args.rirs, args.snr, _seed(args), args.out_dir,
                           args.out, args.fmt)


def cmd_specaug(args):
    return pipeline.do_specaug(args.inp, args.out_dir, _seed(args), _yaml_file(args.policy),
                               _yaml_file(args.stft))


def cmd_toy_corpus(args):
    return pipeline.do_toy_corpus(args.out_dir, _seed(args), args.num_utts, args.rate)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="distaug", description="Distant-talk ASR corpus augmentation")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(fn=fn)
        return sp

    def seed(sp):
        sp.add_argument("--seed", type=int, default=0)

    def fmt(sp):
        sp.add_argument("--fmt", choices=("float32", "pcm16"), default="float32")

    sp = add("run", cmd_run, "run a pipeline config (bundled recipe by default)")
    sp.add_argument("config", nargs="?")
    sp.add_argument("--out", help="output directory")
    sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override, e.g. seed=3 or stages.pl.params.delta=20")
    sp.add_argument("--jobs", type=int)

    sp = add("assemble", cmd_assemble, "merge orig/tts/cgan/pl manifests")
    sp.add_argument("--orig", required=True)
    for k in ("tts", "cgan", "pl"):
        sp.add_argument(f"--{k}")
    sp.add_argument("--out", required=True)
    sp.add_argument("--figure")

    sp = add("rir", cmd_rir, "simulate a pool of room impulse responses")
    sp.add_argument("--count", type=int, default=8)
    sp.add_argument("--ranges", help="YAML file of per-field [min, max] ranges")
    sp.add_argument("--out-dir", required=True)
    seed(sp)

    sp = add("tts-aug", cmd_tts_aug, "synthesize texts and perturb with RIR and noise")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--cond")
    sp.add_argument("--engine", default="stub", help="'stub' or an http(s) endpoint URI")
    sp.add_argument("--rirs")
    sp.add_argument("--noise")
    sp.add_argument("--snr", type=_range, default=[5.0, 20.0], metavar="LO:HI")
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--rate", type=int, default=16000)
    seed(sp)
    fmt(sp)

    sp = add("cgan-train", cmd_cgan_train, "train the clean-to-noisy Cycle-GAN")
    sp.add_argument("--clean", required=True, help="manifest")
    sp.add_argument("--noisy", required=True, help="manifest or directory of WAV files")
    sp.add_argument("--config", help="YAML model config")
    sp.add_argument("--steps", type=int, default=200)
    sp.add_argument("--lr", type=float, default=2e-4)
    sp.add_argument("--batch-size", type=int, default=1)
    sp.add_argument("--checkpoint-every", type=int, default=0)
    sp.add_argument("--out-dir", help="directory for model.ckpt, history.csv and loss.png")
    sp.add_argument("--out", help="checkpoint path; other outputs go next to it")
    seed(sp)

    sp = add("cgan-apply", cmd_cgan_apply, "map clean audio to the noisy domain")
    sp.add_argument("--model", required=True)
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--out", required=True)
    fmt(sp)

    sp = add("pl-filter", cmd_pl_filter, "keep pseudo-labels with CER at most delta")
    sp.add_argument("--in", "--refs", dest="inp", required=True)
    sp.add_argument("--hyps", required=True)
    sp.add_argument("--delta", default="50")
    sp.add_argument("--exclude-exact", action="store_true")
    sp.add_argument("--no-spaces", action="store_true", help="ignore spaces when scoring")
    sp.add_argument("--out", required=True)

    sp = add("pl-sweep", cmd_pl_sweep, "kept hours over several thresholds")
    sp.add_argument("--in", "--refs", dest="inp", required=True)
    sp.add_argument("--hyps", required=True)
    sp.add_argument("--deltas", default="20,50,70,inf")
    sp.add_argument("--exclude-exact", action="store_true")
    sp.add_argument("--base", help="manifest whose hours are added to each row")
    sp.add_argument("--out", required=True, help="TSV table")
    sp.add_argument("--figure")

    sp = add("speed", cmd_speed, "speed-perturbed copies")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--factors", default="0.9,1.0,1.1")
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--out", required=True)
    fmt(sp)

    sp = add("mix", cmd_mix, "add reverberation and noise to existing audio")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--noise")
    sp.add_argument("--rirs")
    sp.add_argument("--snr", type=_range, default=[5.0, 20.0], metavar="LO:HI")
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--out", required=True)
    seed(sp)
    fmt(sp)

    sp = add("specaug", cmd_specaug, "masked log-magnitude features")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--policy", help="YAML mask policy")
    sp.add_argument("--stft", help="YAML STFT config")
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--seed", "--specaug-seed", dest="seed", type=int, default=0)

    sp = add("toy-corpus", cmd_toy_corpus, "generate the synthetic demo corpus")
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--num-utts", type=int, default=120)
    sp.add_argument("--rate", type=int, default=16000)
    seed(sp)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        res = args.fn(args)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageFailed as exc:
        print(f"stage failed: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (DistaugError, ValueError, OSError) as exc:
        print(f"{args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_STAGE
    if isinstance(res, pipeline.StageResult):
        _print_result(res)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
