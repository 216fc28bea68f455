"""Acceptance suite: one test per release criterion, each printing a
PASS line (run with ``pytest tests/test_acceptance.py -v -s``)."""

import time
from statistics import median

import numpy as np
import pytest
import torch

from conftest import toy_config
from oracles import assert_grads_close, brute_force_eer, fd_gradient
from replaycm.dataset import (
    LABEL_GENUINE,
    SamplerConfig,
    SnnSampler,
    UtteranceRecord,
    parse_manifest,
)
from replaycm.features import SAMPLE_RATE, AudioBuffer, extract_feature
from replaycm.losses import (
    ClassCentroids,
    center_loss,
    reconstruction_loss,
    snn_hinge,
    weighted_ce,
)
from replaycm.metrics import TrialScore, apply_fusion, compute_eer, fit_fusion
from replaycm.model import ModelSpec, build_model, count_parameters
from replaycm.training import (
    FeatureStore,
    TrainState,
    init_output_bias,
    labels_of,
    make_optimizer,
    run_experiment,
    score_utterances,
    train_epoch,
)

TINY = dict(stage_filters=(4, 8, 16, 32), stage_blocks=(1, 1, 1, 1))


def report(criterion: int, message: str):
    print(f"\n[criterion {criterion:2d}] PASS - {message}")


def test_c01_shape_contract():
    rng = np.random.default_rng(0)
    audio = AudioBuffer(rng.standard_normal(int(8.5 * SAMPLE_RATE)), SAMPLE_RATE)
    expected = {"logspec": (401, 566), "gdgram": (401, 566), "lfbank": (80, 566)}
    timings = {}
    for kind, shape in expected.items():
        start = time.perf_counter()
        feat = extract_feature(audio, kind)
        timings[kind] = time.perf_counter() - start
        assert (feat.bins, feat.frames) == shape
        assert timings[kind] < 1.0
    report(1, "401x566 / 80x566 shapes, " +
           ", ".join(f"{k} {t * 1000:.0f} ms" for k, t in timings.items()))


def test_c02_parameter_budget():
    gap_count = count_parameters(build_model(ModelSpec("logspec", "gap")))
    gavp_count = count_parameters(build_model(ModelSpec("logspec", "gavp")))
    rel_to_budget = abs(gap_count - 1.34e6) / 1.34e6
    rel_between = abs(gap_count - gavp_count) / gap_count
    assert rel_to_budget < 0.02
    assert rel_between < 0.01
    report(2, f"GAP {gap_count} params ({100 * rel_to_budget:.2f}% off 1.34M), "
              f"GAP vs GAVP {100 * rel_between:.3f}%")


def test_c03_gradient_suite():
    start = time.perf_counter()
    g = torch.tensor(0.0, dtype=torch.float64)
    s = torch.tensor(1.0, dtype=torch.float64)

    for trial in range(100):
        rng = np.random.default_rng(trial)
        y = s if rng.integers(2) else g
        w = float(rng.uniform(0.1, 2.0))

        score = torch.tensor(rng.uniform(0.05, 0.95), dtype=torch.float64, requires_grad=True)
        weighted_ce(score, y, w).backward()
        with torch.no_grad():
            numeric = fd_gradient(lambda: weighted_ce(score, y, w).item(), score.data.view(1))
        assert_grads_close(np.array([score.grad.item()]), numeric.numpy(), rtol=1e-4)

        centroids = ClassCentroids(5, 0.5, dtype=torch.float64)
        centroids.genuine = torch.tensor(rng.standard_normal(5))
        centroids.spoofed = torch.tensor(rng.standard_normal(5))
        e = torch.tensor(rng.standard_normal(5), requires_grad=True)
        center_loss(e, y, centroids)[0].backward()
        with torch.no_grad():
            numeric = fd_gradient(lambda: center_loss(e, y, centroids)[0].item(), e.data)
        assert_grads_close(e.grad.numpy(), numeric.numpy(), rtol=1e-4)

        e1 = torch.tensor(rng.standard_normal(6), requires_grad=True)
        e2 = torch.tensor(rng.standard_normal(6))
        y2 = s if rng.integers(2) else g
        m = float(rng.uniform(0.1, 0.9))
        hinge = snn_hinge(e1, e2, y, y2, m)
        hinge.backward()
        with torch.no_grad():
            numeric = fd_gradient(lambda: snn_hinge(e1, e2, y, y2, m).item(), e1.data)
        if hinge.item() > 0:
            assert_grads_close(e1.grad.numpy(), numeric.numpy(), rtol=1e-4)
        else:
            assert np.all(e1.grad.numpy() == 0) and np.all(numeric.numpy() == 0)

        x = torch.tensor(rng.standard_normal((3, 3)))
        x_hat = torch.tensor(rng.standard_normal((3, 3)), requires_grad=True)
        reconstruction_loss(x, x_hat).backward()
        with torch.no_grad():
            numeric = fd_gradient(lambda: reconstruction_loss(x, x_hat).item(), x_hat.data)
        assert_grads_close(x_hat.grad.numpy(), numeric.numpy(), rtol=1e-4)

    elapsed = time.perf_counter() - start
    assert elapsed < 60
    report(3, f"4 losses x 100 random inputs vs central differences in {elapsed:.1f}s")


def test_c04_sampler_statistics():
    records = [UtteranceRecord(f"g{i:03d}", "genuine", "train") for i in range(10)]
    records += [UtteranceRecord(f"s{i:03d}", "spoofed", "train") for i in range(90)]
    fractions = []
    for seed in range(5):
        sampler = SnnSampler(records, SamplerConfig(5000, seed))  # 1e4 elements
        elements = [r for pair in sampler.pairs() for r in pair]
        frac = np.mean([r.label == LABEL_GENUINE for r in elements])
        assert 0.49 <= frac <= 0.51
        drawn = {r.utt_id for r in elements if r.label == LABEL_GENUINE}
        assert drawn == {f"g{i:03d}" for i in range(10)}
        fractions.append(frac)
    report(4, "genuine fraction " +
           ", ".join(f"{f:.4f}" for f in fractions) + " over 5 seeds; full coverage")


def test_c05_eer_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(4, 201))
        n_genuine = int(rng.integers(1, n))
        scores = rng.standard_normal(n)
        genuine, spoofed = scores[:n_genuine], scores[n_genuine:]
        trials = [TrialScore(f"g{i}", float(v)) for i, v in enumerate(genuine)]
        trials += [TrialScore(f"s{i}", float(v)) for i, v in enumerate(spoofed)]
        labels = {t.utt_id: ("genuine" if t.utt_id[0] == "g" else "spoofed") for t in trials}
        fast = compute_eer(trials, labels)
        slow = brute_force_eer(genuine, spoofed)
        worst = max(worst, abs(fast - slow))
        assert abs(fast - slow) < 1e-9
    elapsed = time.perf_counter() - start
    assert elapsed < 30
    report(5, f"1000 random score sets, max |diff| {worst:.2e}, {elapsed:.1f}s")


def test_c06_overfit_smoke(toy_corpus):
    start = time.perf_counter()
    cfg = toy_config(toy_corpus, seed=0)
    torch.manual_seed(cfg.seed)
    train_records = parse_manifest(cfg.train_manifest, "train")
    assert len(train_records) == 40
    store = FeatureStore(cfg.features_dir, cfg.input_kind)
    labels = labels_of(train_records)

    model = build_model(cfg.model_spec)
    init_output_bias(model, cfg.mode, cfg.ce_pos_weight)
    optimizer = make_optimizer(model, cfg)
    sampler = SnnSampler(train_records, SamplerConfig(cfg.num_samples, cfg.seed))
    state = TrainState()

    losses = []
    reached_at = None
    for epoch in range(1, 51):
        state.epoch = epoch
        losses.append(
            train_epoch(model, train_records, store, cfg, optimizer, state, sampler=sampler)
        )
        train_eer = compute_eer(score_utterances(model, train_records, store), labels)
        if train_eer == 0.0 and reached_at is None:
            reached_at = epoch
    elapsed = time.perf_counter() - start
    assert reached_at is not None, "train EER never reached 0.00 within 50 epochs"
    assert losses[49] < losses[0]  # loss monotonicity over the overfit run
    assert elapsed < 600
    report(6, f"train EER 0.00 at epoch {reached_at}; loss {losses[0]:.3f} -> "
              f"{losses[49]:.3f} over 50 epochs ({elapsed:.1f}s)")


def test_c07_loss_mode_ordering(toy_corpus, tmp_path):
    eers = {}
    for mode in ("snn", "ce"):
        eers[mode] = []
        for seed in range(5):
            cfg = toy_config(toy_corpus, mode=mode, max_epochs=8, patience=8, seed=seed)
            result = run_experiment(cfg, tmp_path / f"{mode}_{seed}")
            eers[mode].append(result.dev_eer)
    snn_median = median(eers["snn"])
    ce_median = median(eers["ce"])
    assert snn_median <= ce_median
    report(7, f"median dev EER over 5 seeds: SNN {snn_median:.3f} <= CE {ce_median:.3f}")


def test_c08_decoder_contract():
    shares = []
    for kind, shape in (("logspec", (401, 566)), ("gdgram", (401, 566)), ("lfbank", (80, 566))):
        model = build_model(ModelSpec(kind, "gap", with_decoder=True)).eval()
        with torch.no_grad():
            _, _, conv_out = model(torch.randn(1, 1, *shape))
            recon = model.reconstruct(conv_out, shape)
        assert tuple(recon.shape[-2:]) == shape
        total = count_parameters(model)
        share = (total - count_parameters(model, include_decoder=False)) / total
        assert share < 0.02
        shares.append(share)
    report(8, f"reconstruction shapes exact; decoder share {100 * max(shares):.2f}% < 2%")


def test_c09_end_to_end_determinism(toy_corpus, tmp_path):
    cfg = toy_config(toy_corpus, max_epochs=3, seed=13)
    run_experiment(cfg, tmp_path / "first")
    run_experiment(cfg, tmp_path / "second")
    compared = []
    for name in ("scores_dev.txt", "scores_eval.txt", "best.ckpt", "train.log"):
        a = (tmp_path / "first" / name).read_bytes()
        b = (tmp_path / "second" / name).read_bytes()
        assert a == b, f"{name} differs between identically-seeded runs"
        compared.append(name)
    report(9, f"byte-identical across reruns: {', '.join(compared)}")


def test_c10_fusion_sanity():
    worst_delta = -1.0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        n = 80
        genuine = rng.normal(0.35, 0.1, n)
        spoofed = rng.normal(0.65, 0.1, n)
        base = [TrialScore(f"g{i}", float(v)) for i, v in enumerate(genuine)]
        base += [TrialScore(f"s{i}", float(v)) for i, v in enumerate(spoofed)]
        labels = {t.utt_id: ("genuine" if t.utt_id[0] == "g" else "spoofed") for t in base}
        base_eer = compute_eer(base, labels)

        duplicate_model = fit_fusion([base, base], labels)
        duplicate_eer = compute_eer(apply_fusion(duplicate_model, [base, base]), labels)
        assert duplicate_eer == pytest.approx(base_eer, abs=1e-12)

        noise = [TrialScore(t.utt_id, float(rng.uniform())) for t in base]
        noisy_model = fit_fusion([base, noise], labels)
        fused_eer = compute_eer(apply_fusion(noisy_model, [base, noise]), labels)
        assert fused_eer <= base_eer + 0.005
        worst_delta = max(worst_delta, fused_eer - base_eer)
    report(10, f"duplicate fusion EER unchanged; noise fusion delta <= "
               f"{100 * worst_delta:.2f} pp over 5 seeds")
