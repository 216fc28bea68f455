"""Optimization loop: Adam with decoupled weight decay, Siamese and
single-branch epochs, dev-EER early stopping, checkpointing, scoring."""

from __future__ import annotations

import itertools
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import losses
from .audio_io import read_feature_cache
from .config import ExperimentConfig
from .dataset import LABEL_SPOOFED, SamplerConfig, SnnSampler, UtteranceRecord, parse_manifest
from .errors import InvalidInput, TrainingDiverged
from .metrics import TrialScore, compute_eer, write_scores
from .model import ReplayDetector, build_model, save_checkpoint

CONTINUE = "continue"
STOP = "stop"


@dataclass
class TrainState:
    epoch: int = 0
    best_dev_eer: float = math.inf
    epochs_since_best: int = 0
    best_parameters: dict | None = None
    global_step: int = 0


@dataclass
class ExperimentResult:
    checkpoint_path: str
    dev_eer: float
    dev_scores: list[TrialScore]
    eval_scores: list[TrialScore] = field(default_factory=list)
    epochs_run: int = 0


class FeatureStore:
    """Loads cached feature matrices as [1, bins, frames] float32 tensors."""

    def __init__(self, features_dir: str | Path, kind: str, cache_size: int = 256):
        self.features_dir = Path(features_dir)
        self.kind = kind
        self._cache: OrderedDict[str, torch.Tensor] = OrderedDict()
        self._cache_size = cache_size

    def load(self, utt_id: str) -> torch.Tensor:
        hit = self._cache.get(utt_id)
        if hit is not None:
            self._cache.move_to_end(utt_id)
            return hit
        path = self.features_dir / f"{utt_id}.feat"
        if not path.exists():
            raise InvalidInput(f"no cached features for {utt_id!r} under {self.features_dir}")
        feat = read_feature_cache(path)
        if feat.kind != self.kind:
            raise InvalidInput(
                f"{path}: cached kind {feat.kind!r} does not match requested {self.kind!r}"
            )
        tensor = torch.from_numpy(np.ascontiguousarray(feat.data, dtype=np.float32))
        tensor = tensor.unsqueeze(0)
        self._cache[utt_id] = tensor
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return tensor


def init_output_bias(model: ReplayDetector, mode: str, pos_weight: float = 1.0 / 9.0) -> ReplayDetector:
    """Prior-matching bias for the weighted-CE modes: log(1/pos_weight)
    puts the initial score at the implied class prior (0.9 for 1/9);
    Siamese modes start unbiased."""
    bias = math.log(1.0 / pos_weight) if mode in (losses.MODE_CE, losses.MODE_CL) else 0.0
    with torch.no_grad():
        model.out.bias.fill_(bias)
    return model


def make_optimizer(model: ReplayDetector, cfg: ExperimentConfig) -> torch.optim.AdamW:
    return torch.optim.AdamW(
        model.parameters(),
        lr=cfg.lr,
        betas=(cfg.beta1, cfg.beta2),
        eps=cfg.eps,
        weight_decay=cfg.weight_decay,
    )


def early_stop_check(state: TrainState, dev_eer: float, patience: int) -> str:
    """Strict-improvement early stopping; mutates the state counters."""
    if dev_eer < state.best_dev_eer:
        state.best_dev_eer = dev_eer
        state.epochs_since_best = 0
    else:
        state.epochs_since_best += 1
    return STOP if state.epochs_since_best >= patience else CONTINUE


def labels_of(records: list[UtteranceRecord]) -> dict[str, str]:
    return {r.utt_id: r.label for r in records}


def _stack(store: FeatureStore, records: list[UtteranceRecord]) -> torch.Tensor:
    return torch.stack([store.load(r.utt_id) for r in records])


def _label_tensor(records: list[UtteranceRecord]) -> torch.Tensor:
    return torch.tensor([1.0 if r.label == LABEL_SPOOFED else 0.0 for r in records])


def _check_finite(loss: torch.Tensor, step: int) -> None:
    if not torch.isfinite(loss):
        raise TrainingDiverged(f"non-finite loss {loss.item()!r}", step)


def train_epoch(
    model: ReplayDetector,
    records: list[UtteranceRecord],
    store: FeatureStore,
    cfg: ExperimentConfig,
    optimizer: torch.optim.Optimizer,
    state: TrainState,
    sampler: SnnSampler | None = None,
    centroids: losses.ClassCentroids | None = None,
) -> float:
    """One optimization epoch; returns the mean step loss.

    Siamese modes consume ``num_samples`` pairs from the sampler; the
    single-branch modes make one shuffled pass over the utterances.
    Both Siamese branches run through the same parameter set.
    """
    model.train()
    weights = cfg.loss_weights
    pos_weight = losses.resolve_pos_weight(cfg.mode, weights)
    step_losses: list[float] = []

    if cfg.mode in (losses.MODE_SNN, losses.MODE_SNN_REL):
        assert sampler is not None
        sampler.reshuffle(state.epoch)
        pair_stream = sampler.pairs()
        while True:
            batch = list(itertools.islice(pair_stream, cfg.batch_size))
            if not batch:
                break
            first = [p[0] for p in batch]
            second = [p[1] for p in batch]
            x = torch.cat([_stack(store, first), _stack(store, second)])
            y1, y2 = _label_tensor(first), _label_tensor(second)

            score, embedding, conv_out = model(x)
            s1, s2 = score.chunk(2)
            e1, e2 = embedding.chunk(2)
            ce1 = losses.weighted_ce(s1, y1, pos_weight).mean()
            ce2 = losses.weighted_ce(s2, y2, pos_weight).mean()
            snn = losses.snn_hinge(e1, e2, y1, y2, weights.margin).mean()
            if cfg.mode == losses.MODE_SNN_REL:
                target_shape = (x.shape[-2], x.shape[-1])
                recon = model.reconstruct(conv_out, target_shape)
                rel = losses.reconstruction_loss(x.squeeze(1), recon)
                rel1, rel2 = rel.chunk(2)
                loss = losses.composite_loss(
                    cfg.mode, weights, ce1=ce1, ce2=ce2, snn=snn,
                    rel1=rel1.mean(), rel2=rel2.mean(),
                )
            else:
                loss = losses.composite_loss(cfg.mode, weights, ce1=ce1, ce2=ce2, snn=snn)

            state.global_step += 1
            _check_finite(loss, state.global_step)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            step_losses.append(float(loss.item()))
    else:
        order_rng = np.random.default_rng([cfg.seed, 2, state.epoch])
        order = order_rng.permutation(len(records))
        shuffled = [records[i] for i in order]
        for start in range(0, len(shuffled), cfg.batch_size):
            batch = shuffled[start : start + cfg.batch_size]
            x = _stack(store, batch)
            y = _label_tensor(batch)

            score, embedding, _ = model(x)
            ce = losses.weighted_ce(score, y, pos_weight).mean()
            if cfg.mode == losses.MODE_CL:
                assert centroids is not None
                cl_terms, updated = losses.center_loss(embedding, y, centroids)
                loss = losses.composite_loss(cfg.mode, weights, ce=ce, cl=cl_terms.mean())
            else:
                updated = centroids
                loss = losses.composite_loss(cfg.mode, weights, ce=ce)

            state.global_step += 1
            _check_finite(loss, state.global_step)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            step_losses.append(float(loss.item()))
            if cfg.mode == losses.MODE_CL and updated is not None:
                centroids.genuine = updated.genuine
                centroids.spoofed = updated.spoofed
    return float(np.mean(step_losses)) if step_losses else 0.0


def score_utterances(
    model: ReplayDetector,
    records: list[UtteranceRecord],
    store: FeatureStore,
    batch_size: int = 32,
) -> list[TrialScore]:
    """Per-utterance sigmoid scores in manifest order."""
    was_training = model.training
    model.eval()
    out: list[TrialScore] = []
    try:
        with torch.no_grad():
            for start in range(0, len(records), batch_size):
                batch = records[start : start + batch_size]
                score, _, _ = model(_stack(store, batch))
                out.extend(
                    TrialScore(r.utt_id, float(s)) for r, s in zip(batch, score)
                )
    finally:
        model.train(was_training)
    return out


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path) -> ExperimentResult:
    """Train per the config, early-stop on dev EER, emit artifacts.

    Writes ``best.ckpt``, ``train.log`` and ``scores_dev.txt`` (plus
    ``scores_eval.txt`` when an eval manifest is configured) under
    ``out_dir``.  Fully deterministic for a fixed config and seed.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(cfg.seed)

    train_records = parse_manifest(cfg.train_manifest, "train")
    dev_records = parse_manifest(cfg.dev_manifest, "dev")
    eval_records = parse_manifest(cfg.eval_manifest, "eval") if cfg.eval_manifest else []
    store = FeatureStore(cfg.features_dir, cfg.input_kind)
    dev_labels = labels_of(dev_records)

    model = build_model(cfg.model_spec)
    init_output_bias(model, cfg.mode, cfg.ce_pos_weight)
    optimizer = make_optimizer(model, cfg)
    sampler = None
    if cfg.mode in (losses.MODE_SNN, losses.MODE_SNN_REL):
        sampler = SnnSampler(train_records, SamplerConfig(cfg.num_samples, cfg.seed))
    centroids = None
    if cfg.mode == losses.MODE_CL:
        centroids = losses.ClassCentroids(cfg.model_spec.embedding_dim, cfg.centroid_update_rate)

    state = TrainState()
    log_path = out_dir / "train.log"
    with open(log_path, "w", encoding="utf-8") as log:
        for epoch in range(1, cfg.max_epochs + 1):
            state.epoch = epoch
            train_loss = train_epoch(
                model, train_records, store, cfg, optimizer, state,
                sampler=sampler, centroids=centroids,
            )
            dev_scores = score_utterances(model, dev_records, store, cfg.batch_size)
            dev_eer = compute_eer(dev_scores, dev_labels)
            verdict = early_stop_check(state, dev_eer, cfg.patience)
            if state.epochs_since_best == 0:
                state.best_parameters = {
                    k: v.detach().clone() for k, v in model.state_dict().items()
                }
            log.write(f"{epoch} {train_loss:.6f} {dev_eer:.6f} {state.epochs_since_best}\n")
            if verdict == STOP:
                break

    assert state.best_parameters is not None
    model.load_state_dict(state.best_parameters)
    checkpoint_path = out_dir / "best.ckpt"
    save_checkpoint(checkpoint_path, model)

    dev_scores = score_utterances(model, dev_records, store, cfg.batch_size)
    write_scores(out_dir / "scores_dev.txt", dev_scores)
    eval_scores: list[TrialScore] = []
    if eval_records:
        eval_scores = score_utterances(model, eval_records, store, cfg.batch_size)
        write_scores(out_dir / "scores_eval.txt", eval_scores)

    return ExperimentResult(
        checkpoint_path=str(checkpoint_path),
        dev_eer=state.best_dev_eer,
        dev_scores=dev_scores,
        eval_scores=eval_scores,
        epochs_run=state.epoch,
    )
