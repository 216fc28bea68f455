"""Training objectives: weighted CE, Siamese hinge, reconstruction, center loss.

All functions are torch-differentiable and operate per element; the
training loop reduces each term by its batch mean so loss-weight
semantics stay batch-size independent.  Labels are 1 for spoofed and 0
for genuine throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import InvalidConfig, InvalidInput

MODE_CE = "ce"
MODE_CL = "cl"
MODE_SNN = "snn"
MODE_SNN_REL = "snn_rel"
MODES = (MODE_CE, MODE_CL, MODE_SNN, MODE_SNN_REL)

# Sigmoid outputs are clamped away from {0, 1} before any log.
_SCORE_EPS = 1e-7


@dataclass(frozen=True)
class LossWeights:
    cl_gamma: float = 0.001
    rel_weight: float = 50.0
    margin: float = 0.5
    ce_pos_weight: float = 1.0 / 9.0

    def __post_init__(self):
        if min(self.cl_gamma, self.rel_weight, self.ce_pos_weight) < 0:
            raise InvalidConfig("loss weights must be non-negative")
        if not (0 <= self.margin <= 1):
            raise InvalidConfig(f"cosine margin must lie in [0, 1], got {self.margin}")


def weighted_ce(score: torch.Tensor, y: torch.Tensor, pos_weight: float = 1.0) -> torch.Tensor:
    """Class-weighted binary cross-entropy on sigmoid scores.

    Spoofed (y=1) terms are scaled by ``pos_weight``; genuine terms by 1.
    """
    score = score.clamp(_SCORE_EPS, 1.0 - _SCORE_EPS)
    y = y.to(score.dtype)
    weight = torch.where(y > 0.5, torch.full_like(score, pos_weight), torch.ones_like(score))
    return -weight * (y * torch.log(score) + (1.0 - y) * torch.log1p(-score))


def cosine_similarity_safe(e1: torch.Tensor, e2: torch.Tensor) -> torch.Tensor:
    """Cosine similarity over the last dim; defined as 0 (with zero
    gradient) when either embedding has zero norm."""
    single = e1.dim() == 1
    if single:
        e1, e2 = e1.unsqueeze(0), e2.unsqueeze(0)
    n1 = torch.linalg.vector_norm(e1, dim=-1)
    n2 = torch.linalg.vector_norm(e2, dim=-1)
    valid = (n1 > 0) & (n2 > 0)
    cos = torch.zeros(e1.shape[0], dtype=e1.dtype, device=e1.device)
    if valid.any():
        idx = valid.nonzero(as_tuple=True)[0]
        dot = (e1[idx] * e2[idx]).sum(-1)
        cos = cos.index_put((idx,), dot / (n1[idx] * n2[idx]))
    if not bool(valid.all()):
        # Keep degenerate elements on the autograd graph with an exactly
        # zero value and exactly zero gradient.
        cos = cos + 0.0 * (e1.sum(-1) + e2.sum(-1))
    return cos.squeeze(0) if single else cos


def snn_hinge(
    e1: torch.Tensor,
    e2: torch.Tensor,
    y1: torch.Tensor,
    y2: torch.Tensor,
    margin: float = 0.5,
) -> torch.Tensor:
    """Siamese hinge loss max(0, m - l_d * cos(e1, e2)).

    l_d is +1 for a same-label pair and -1 otherwise.
    """
    if e1.shape != e2.shape:
        raise InvalidInput(f"embedding shapes differ: {tuple(e1.shape)} vs {tuple(e2.shape)}")
    y1 = torch.as_tensor(y1, device=e1.device)
    y2 = torch.as_tensor(y2, device=e1.device)
    l_d = torch.where(y1 == y2, 1.0, -1.0).to(e1.dtype)
    cos = cosine_similarity_safe(e1, e2)
    return torch.relu(margin - l_d * cos)


def reconstruction_loss(x: torch.Tensor, x_hat: torch.Tensor) -> torch.Tensor:
    """Squared Frobenius norm of (x - x_hat), summed over the trailing
    two (bins, frames) dims; leading batch dims are preserved."""
    if x.shape != x_hat.shape:
        raise InvalidInput(f"shape mismatch: {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    return ((x - x_hat) ** 2).sum(dim=(-2, -1))


class ClassCentroids:
    """Per-class embedding centroids for the center loss, updated per batch."""

    def __init__(self, dim: int, update_rate: float = 0.5, dtype: torch.dtype = torch.float32):
        self.genuine = torch.zeros(dim, dtype=dtype)
        self.spoofed = torch.zeros(dim, dtype=dtype)
        self.update_rate = update_rate

    def centroid_for(self, y: torch.Tensor) -> torch.Tensor:
        y = y.reshape(-1, 1).to(self.genuine.dtype)
        return y * self.spoofed + (1.0 - y) * self.genuine


def center_loss(
    e: torch.Tensor, y: torch.Tensor, centroids: ClassCentroids
) -> tuple[torch.Tensor, ClassCentroids]:
    """Half squared distance of each embedding to its class centroid.

    Returns the per-element loss and the post-batch updated centroids
    (c_y moves toward the batch mean of class y by ``update_rate``).
    Gradients flow into the embeddings only.
    """
    e2 = e if e.dim() == 2 else e.unsqueeze(0)
    yv = torch.as_tensor(y).reshape(-1)
    c = centroids.centroid_for(yv).to(e2.dtype)
    loss = 0.5 * ((e2 - c) ** 2).sum(dim=-1)

    updated = ClassCentroids(e2.shape[-1], centroids.update_rate, centroids.genuine.dtype)
    detached = e2.detach().to(centroids.genuine.dtype)
    for label, current in ((0, centroids.genuine), (1, centroids.spoofed)):
        members = detached[yv == label]
        if len(members):
            new = current - centroids.update_rate * (current - members.mean(dim=0))
        else:
            new = current.clone()
        if label == 0:
            updated.genuine = new
        else:
            updated.spoofed = new
    if e.dim() != 2:
        loss = loss.squeeze(0)
    return loss, updated


def composite_loss(
    mode: str,
    weights: LossWeights = LossWeights(),
    *,
    ce: torch.Tensor | None = None,
    cl: torch.Tensor | None = None,
    ce1: torch.Tensor | None = None,
    ce2: torch.Tensor | None = None,
    snn: torch.Tensor | None = None,
    rel1: torch.Tensor | None = None,
    rel2: torch.Tensor | None = None,
) -> torch.Tensor:
    """Combine already-reduced loss parts according to the training mode."""

    def require(**parts):
        missing = [name for name, value in parts.items() if value is None]
        if missing:
            raise InvalidConfig(f"mode {mode!r} is missing loss parts: {', '.join(missing)}")
        return parts.values()

    if mode == MODE_CE:
        (ce,) = require(ce=ce)
        return ce
    if mode == MODE_CL:
        ce, cl = require(ce=ce, cl=cl)
        return ce + weights.cl_gamma * cl
    if mode == MODE_SNN:
        ce1, ce2, snn = require(ce1=ce1, ce2=ce2, snn=snn)
        return ce1 + ce2 + snn
    if mode == MODE_SNN_REL:
        ce1, ce2, snn, rel1, rel2 = require(ce1=ce1, ce2=ce2, snn=snn, rel1=rel1, rel2=rel2)
        return ce1 + ce2 + snn + weights.rel_weight * (rel1 + rel2)
    raise InvalidConfig(f"unknown training mode {mode!r}")


def resolve_pos_weight(mode: str, weights: LossWeights) -> float:
    """CE branches are class-weighted only in the single-branch modes; the
    pair sampler already balances classes in the Siamese modes."""
    return weights.ce_pos_weight if mode in (MODE_CE, MODE_CL) else 1.0
