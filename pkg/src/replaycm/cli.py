"""Command-line entry point.

Subcommands: extract, make-toy, train, score, eer, fuse.
Exit codes: 0 success, 1 usage/config error, 2 data error, 3 training
divergence.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import metrics
from .audio_io import read_wav, write_feature_cache
from .config import ExperimentConfig, parse_config
from .dataset import make_toy_corpus, parse_manifest, write_manifest
from .errors import (
    InvalidAudio,
    InvalidConfig,
    InvalidDataset,
    InvalidInput,
    ParseError,
    TrainingDiverged,
)
from .features import FEATURE_KINDS, GdConfig, StftConfig, extract_feature
from .model import load_checkpoint
from .training import FeatureStore, labels_of, run_experiment, score_utterances

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3

_DATA_ERRORS = (ParseError, InvalidAudio, InvalidInput, InvalidDataset, FileNotFoundError)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1 instead of argparse's 2
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="replaycm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract and cache features for a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--audio-dir", required=True)
    p.add_argument("--feature", required=True, choices=FEATURE_KINDS)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="optional config file for feature parameters")
    p.add_argument("--force", action="store_true", help="rewrite existing cache files")

    p = sub.add_parser("make-toy", help="generate the synthetic toy corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-genuine", type=int, default=20)
    p.add_argument("--n-spoofed", type=int, default=20)

    p = sub.add_parser("train", help="run a training experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, help="override the config seed")

    p = sub.add_parser("score", help="score a manifest with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--features-dir", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eer", help="compute the EER of a score file")
    p.add_argument("--scores", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--curve", help="also write the (FAR, FRR) sweep to this file")

    p = sub.add_parser("fuse", help="calibrate fusion on dev scores, apply to eval")
    p.add_argument("--manifest", required=True, help="dev manifest with labels")
    p.add_argument("--dev", action="append", required=True, help="dev score file (repeat per subsystem)")
    p.add_argument("--eval", dest="eval_files", action="append", default=[],
                   help="eval score file (repeat per subsystem)")
    p.add_argument("--out", required=True)
    return parser


def _cmd_extract(args) -> int:
    cfg = parse_config(args.config) if args.config else ExperimentConfig()
    stft_cfg = StftConfig()
    gd_cfg = GdConfig(lifter_len=cfg.lifter_len)
    records = parse_manifest(args.manifest, "train", audio_dir=args.audio_dir)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    failures: list[tuple[str, str]] = []
    for rec in records:
        cache_path = out_dir / f"{rec.utt_id}.feat"
        if cache_path.exists() and not args.force:
            continue
        try:
            audio_path = Path(rec.audio_path)
            if not audio_path.exists():
                flac = audio_path.with_suffix(".flac")
                if flac.exists():
                    raise InvalidAudio(
                        f"{flac}: FLAC decoding is not built in; convert to WAV first"
                    )
                raise InvalidAudio(f"{audio_path}: audio file not found")
            audio = read_wav(audio_path)
            feat = extract_feature(
                audio, args.feature, stft_cfg, gd_cfg,
                num_filters=cfg.num_filters, buffer_seconds=cfg.buffer_seconds,
            )
            write_feature_cache(cache_path, feat)
        except (InvalidAudio, InvalidConfig, OSError) as exc:
            failures.append((rec.utt_id, str(exc)))
    if failures:
        for utt_id, message in failures:
            print(f"FAILED {utt_id}: {message}", file=sys.stderr)
        print(f"{len(failures)} of {len(records)} utterances failed", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def _cmd_make_toy(args) -> int:
    out_dir = Path(args.out)
    audio_dir = out_dir / "audio"
    counts = {
        "train": (args.n_genuine, args.n_spoofed),
        "dev": (max(1, args.n_genuine // 2), max(1, args.n_spoofed // 2)),
        "eval": (max(1, args.n_genuine // 2), max(1, args.n_spoofed // 2)),
    }
    for subset, (n_g, n_s) in counts.items():
        records = make_toy_corpus(audio_dir, n_g, n_s, args.seed, subset=subset)
        write_manifest(out_dir / f"{subset}_manifest.txt", records)
        print(f"{subset}: {n_g} genuine + {n_s} spoofed -> {out_dir / f'{subset}_manifest.txt'}")
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    result = run_experiment(cfg, args.out)
    print(f"best dev EER {100 * result.dev_eer:.2f} after {result.epochs_run} epochs")
    print(f"checkpoint: {result.checkpoint_path}")
    return EXIT_OK


def _cmd_score(args) -> int:
    model = load_checkpoint(args.checkpoint)
    records = parse_manifest(args.manifest, "eval")
    store = FeatureStore(args.features_dir, model.spec.input_kind)
    scores = score_utterances(model, records, store)
    metrics.write_scores(args.out, scores)
    print(f"wrote {len(scores)} scores to {args.out}")
    return EXIT_OK


def _cmd_eer(args) -> int:
    scores = metrics.read_scores(args.scores)
    labels = labels_of(parse_manifest(args.manifest, "eval"))
    _, far, frr = metrics.det_curve(scores, labels)
    eer = metrics.eer_from_curve(far, frr)
    if args.curve:
        metrics.write_det_curve(args.curve, far, frr)
    print(f"{100 * eer:.2f}")
    return EXIT_OK


def _cmd_fuse(args) -> int:
    labels = labels_of(parse_manifest(args.manifest, "dev"))
    dev_scores = [metrics.read_scores(p) for p in args.dev]
    fusion = metrics.fit_fusion(dev_scores, labels)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics.write_fusion(out_dir / "fusion_model.txt", fusion)
    fused_dev = metrics.apply_fusion(fusion, dev_scores)
    metrics.write_scores(out_dir / "fused_dev.txt", fused_dev)
    print(f"fused dev EER {100 * metrics.compute_eer(fused_dev, labels):.2f}")
    if args.eval_files:
        eval_scores = [metrics.read_scores(p) for p in args.eval_files]
        fused_eval = metrics.apply_fusion(fusion, eval_scores)
        metrics.write_scores(out_dir / "fused_eval.txt", fused_eval)
    return EXIT_OK


_COMMANDS = {
    "extract": _cmd_extract,
    "make-toy": _cmd_make_toy,
    "train": _cmd_train,
    "score": _cmd_score,
    "eer": _cmd_eer,
    "fuse": _cmd_fuse,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvalidConfig as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
