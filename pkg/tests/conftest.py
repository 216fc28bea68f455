"""Shared fixtures: small synthetic corpora with cached LFBANK features."""

from pathlib import Path

import pytest

from replaycm.audio_io import read_wav, write_feature_cache
from replaycm.config import ExperimentConfig
from replaycm.dataset import make_toy_corpus, write_manifest
from replaycm.features import extract_feature

TOY_BUFFER_SECONDS = 1.5


def build_corpus(root: Path, counts: dict, seed: int, kind: str = "lfbank") -> Path:
    audio_dir = root / "audio"
    feat_dir = root / "feats"
    feat_dir.mkdir(parents=True, exist_ok=True)
    for subset, (n_g, n_s) in counts.items():
        records = make_toy_corpus(audio_dir, n_g, n_s, seed, subset=subset)
        write_manifest(root / f"{subset}_manifest.txt", records)
        for rec in records:
            feat = extract_feature(
                read_wav(rec.audio_path), kind, buffer_seconds=TOY_BUFFER_SECONDS
            )
            write_feature_cache(feat_dir / f"{rec.utt_id}.feat", feat)
    return root


def toy_config(root: Path, **overrides) -> ExperimentConfig:
    base = dict(
        mode="snn",
        input_kind="lfbank",
        pooling="gap",
        stage_filters=(4, 8, 16, 32),
        stage_blocks=(1, 1, 1, 1),
        batch_size=8,
        num_samples=64,
        max_epochs=3,
        patience=15,
        ce_pos_weight=1.0,
        buffer_seconds=TOY_BUFFER_SECONDS,
        seed=0,
        train_manifest=str(root / "train_manifest.txt"),
        dev_manifest=str(root / "dev_manifest.txt"),
        eval_manifest=str(root / "eval_manifest.txt"),
        features_dir=str(root / "feats"),
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def config_file_text(cfg: ExperimentConfig) -> str:
    lines = []
    for key in (
        "mode", "input_kind", "pooling", "batch_size", "num_samples", "max_epochs",
        "patience", "ce_pos_weight", "buffer_seconds", "seed",
        "train_manifest", "dev_manifest", "eval_manifest", "features_dir",
    ):
        lines.append(f"{key} = {getattr(cfg, key)}")
    lines.append("stage_filters = " + ",".join(str(v) for v in cfg.stage_filters))
    lines.append("stage_blocks = " + ",".join(str(v) for v in cfg.stage_blocks))
    return "\n".join(lines) + "\n"


@pytest.fixture(scope="session")
def mini_corpus(tmp_path_factory):
    """12 train / 8 dev / 8 eval utterances for fast unit tests."""
    root = tmp_path_factory.mktemp("mini_corpus")
    return build_corpus(root, {"train": (6, 6), "dev": (4, 4), "eval": (4, 4)}, seed=11)


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    """The 40-utterance train corpus used by the acceptance suite."""
    root = tmp_path_factory.mktemp("toy_corpus")
    return build_corpus(root, {"train": (20, 20), "dev": (10, 10), "eval": (10, 10)}, seed=5)
