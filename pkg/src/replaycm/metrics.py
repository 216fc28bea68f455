"""Equal error rate and logistic-regression score fusion.

Scores follow the convention "higher = more likely spoofed"; spoofed is
the positive class.  At a threshold t an utterance is called spoofed
when its score >= t, so

    FAR(t) = fraction of genuine utterances with score >= t
    FRR(t) = fraction of spoofed utterances with score <  t

FAR falls and FRR rises as t sweeps the sorted unique scores; the EER
is read off at the crossing, linearly interpolated between the two
adjacent sweep points.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInput

LABEL_GENUINE = "genuine"
LABEL_SPOOFED = "spoofed"


@dataclass(frozen=True)
class TrialScore:
    utt_id: str
    score: float


@dataclass(frozen=True)
class FusionModel:
    weights: tuple[float, ...]
    bias: float


def _split_scores(
    scores: list[TrialScore], labels: dict[str, str]
) -> tuple[np.ndarray, np.ndarray]:
    genuine, spoofed = [], []
    for trial in scores:
        if not np.isfinite(trial.score):
            raise InvalidInput(f"non-finite score for utterance {trial.utt_id!r}")
        label = labels.get(trial.utt_id)
        if label is None:
            raise InvalidInput(f"no label for utterance {trial.utt_id!r}")
        (genuine if label == LABEL_GENUINE else spoofed).append(trial.score)
    if not genuine or not spoofed:
        raise InvalidInput("EER needs at least one score from each class")
    return np.asarray(genuine, dtype=np.float64), np.asarray(spoofed, dtype=np.float64)


def det_curve(
    scores: list[TrialScore], labels: dict[str, str]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(thresholds, FAR, FRR) sampled at the sorted unique scores plus a
    sentinel above the maximum (where FAR=0, FRR=1)."""
    genuine, spoofed = _split_scores(scores, labels)
    thresholds = np.unique(np.concatenate([genuine, spoofed]))
    thresholds = np.append(thresholds, thresholds[-1] + 1.0)
    g_sorted = np.sort(genuine)
    s_sorted = np.sort(spoofed)
    far = 1.0 - np.searchsorted(g_sorted, thresholds, side="left") / len(genuine)
    frr = np.searchsorted(s_sorted, thresholds, side="left") / len(spoofed)
    return thresholds, far, frr


def eer_from_curve(far: np.ndarray, frr: np.ndarray) -> float:
    """EER at the FAR/FRR crossing, linearly interpolated."""
    diff = far - frr
    k = int(np.argmax(diff <= 0))
    if diff[k] == 0:
        return float(far[k])
    d_prev, d_next = diff[k - 1], diff[k]
    lam = d_prev / (d_prev - d_next)
    return float(far[k - 1] + lam * (far[k] - far[k - 1]))


def compute_eer(scores: list[TrialScore], labels: dict[str, str]) -> float:
    _, far, frr = det_curve(scores, labels)
    return eer_from_curve(far, frr)


# --------------------------------------------------------------------------
# Logistic-regression score fusion
# --------------------------------------------------------------------------

_FUSION_MAX_ITERS = 5000
_FUSION_LR = 1.0
_FUSION_TOL = 1e-9


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    expz = np.exp(z[~pos])
    out[~pos] = expz / (1.0 + expz)
    return out


def _stack_subsystems(score_lists: list[list[TrialScore]]) -> tuple[list[str], np.ndarray]:
    """Align subsystems on sorted utterance ids into an [N x K] matrix."""
    if len(score_lists) < 2:
        raise InvalidInput("fusion needs at least two subsystems")
    ids = sorted(t.utt_id for t in score_lists[0])
    columns = []
    for k, trials in enumerate(score_lists):
        by_id = {t.utt_id: t.score for t in trials}
        if sorted(by_id) != ids:
            raise InvalidInput(f"subsystem {k} utterance ids do not align with subsystem 0")
        columns.append([by_id[i] for i in ids])
    return ids, np.asarray(columns, dtype=np.float64).T


def fit_fusion(dev_scores: list[list[TrialScore]], labels: dict[str, str]) -> FusionModel:
    """Maximum-likelihood logistic regression on stacked subsystem scores.

    Deterministic full-batch gradient ascent from zero initialization
    with a fixed iteration budget and gradient tolerance; no
    regularization.
    """
    ids, x = _stack_subsystems(dev_scores)
    y = np.empty(len(ids))
    for i, utt_id in enumerate(ids):
        label = labels.get(utt_id)
        if label is None:
            raise InvalidInput(f"no label for utterance {utt_id!r}")
        y[i] = 1.0 if label == LABEL_SPOOFED else 0.0

    w = np.zeros(x.shape[1])
    b = 0.0
    for _ in range(_FUSION_MAX_ITERS):
        p = _sigmoid(x @ w + b)
        residual = y - p
        grad_w = x.T @ residual / len(y)
        grad_b = residual.mean()
        w += _FUSION_LR * grad_w
        b += _FUSION_LR * grad_b
        if max(np.max(np.abs(grad_w)), abs(grad_b)) < _FUSION_TOL:
            break
    return FusionModel(tuple(w.tolist()), float(b))


def apply_fusion(model: FusionModel, scores: list[list[TrialScore]]) -> list[TrialScore]:
    """Fused score per utterance: sigmoid(w . s + b)."""
    if len(scores) != len(model.weights):
        raise InvalidInput(
            f"model fuses {len(model.weights)} subsystems, got {len(scores)}"
        )
    ids, x = _stack_subsystems(scores) if len(scores) >= 2 else _single(scores)
    fused = _sigmoid(x @ np.asarray(model.weights) + model.bias)
    return [TrialScore(utt_id, float(s)) for utt_id, s in zip(ids, fused)]


def _single(scores: list[list[TrialScore]]) -> tuple[list[str], np.ndarray]:
    ids = sorted(t.utt_id for t in scores[0])
    by_id = {t.utt_id: t.score for t in scores[0]}
    return ids, np.asarray([[by_id[i]] for i in ids])


# --------------------------------------------------------------------------
# Plain-text score and fusion-model files
# --------------------------------------------------------------------------


def write_scores(path: str | Path, scores: list[TrialScore]) -> None:
    """One 'utt_id score' line per trial, 9 significant digits."""
    with open(path, "w", encoding="utf-8") as fh:
        for trial in scores:
            fh.write(f"{trial.utt_id} {trial.score:.9g}\n")


def read_scores(path: str | Path) -> list[TrialScore]:
    trials = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            cols = line.split()
            if not cols:
                continue
            if len(cols) != 2:
                raise InvalidInput(f"{path}:{line_no}: expected 'utt_id score'")
            try:
                trials.append(TrialScore(cols[0], float(cols[1])))
            except ValueError as exc:
                raise InvalidInput(f"{path}:{line_no}: bad score {cols[1]!r}") from exc
    return trials


def write_fusion(path: str | Path, model: FusionModel) -> None:
    """Bias line followed by one weight line per subsystem."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{model.bias!r}\n")
        for w in model.weights:
            fh.write(f"{w!r}\n")


def read_fusion(path: str | Path) -> FusionModel:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.strip() for line in fh if line.strip()]
    if not lines:
        raise InvalidInput(f"{path}: empty fusion model file")
    return FusionModel(tuple(float(v) for v in lines[1:]), float(lines[0]))


def write_det_curve(path: str | Path, far: np.ndarray, frr: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for fa, fr in zip(far, frr):
            fh.write(f"{fa:.9g} {fr:.9g}\n")
