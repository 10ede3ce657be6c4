"""Differentiable training objectives.

Conventions: clip features are unit-norm vectors (M, d); dual representations
are tensors (..., S, d) whose parts are unit-norm and ordered by sub-clip
temporal position. Similarity is the dot product of unit vectors. All
exponentials go through logsumexp / softplus so temperatures down to 1e-3
cannot overflow.

The pairwise in-batch contrastive losses take a pairing array mapping each
feature index to its positive partner (an involution with no fixed points);
the queue-based variants take explicit positives plus a detached negative
queue, with the positive term included in the denominator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .errors import ConfigurationError, NormalizationError, ShapeError

Tensor = torch.Tensor

_SOFTPLUS_THRESHOLD = 50.0  # switch to the linear asymptote; error ~e^-50, below f64 resolution


@dataclass(frozen=True)
class Hyperparams:
    """Loss and training hyperparameters (defaults follow the desk-scale recipe)."""

    tau: float = 0.07
    tau_tc: float = 0.5
    theta: float = 0.05
    lambda1: float = 1.0
    lambda2: float = 1.0
    segments: int = 2
    queue_size: int = 16384
    momentum: float = 0.999

    def __post_init__(self):
        if self.tau <= 0 or self.tau_tc <= 0 or self.theta <= 0:
            raise ConfigurationError("temperatures tau, tau_tc, theta must be positive")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigurationError("loss weights lambda1, lambda2 must be non-negative")
        if self.segments < 2:
            raise ConfigurationError(f"segments must be >= 2, got {self.segments}")
        if self.queue_size < 1:
            raise ConfigurationError(f"queue_size must be >= 1, got {self.queue_size}")
        if not (0.0 <= self.momentum <= 1.0):
            raise ConfigurationError(f"momentum must be in [0, 1], got {self.momentum}")


def _check_unit(x: Tensor, what: str, atol: float = 1e-6) -> None:
    norms = x.norm(dim=-1)
    if not torch.all((norms - 1.0).abs() <= atol):
        raise NormalizationError(f"{what} must be unit-norm (max |norm-1| = "
                                 f"{(norms - 1.0).abs().max().item():.3e})")


def _check_pairing(pair_index: Tensor, n: int) -> Tensor:
    pair_index = torch.as_tensor(pair_index, dtype=torch.long)
    if pair_index.shape != (n,):
        raise ShapeError(f"pairing must have shape ({n},), got {tuple(pair_index.shape)}")
    idx = torch.arange(n)
    if torch.any(pair_index == idx) or not torch.all(pair_index[pair_index] == idx):
        raise ConfigurationError("pairing must be an involution with no fixed points")
    return pair_index


def _info_nce_in_batch(sim: Tensor, pair_index: Tensor, tau: float) -> Tensor:
    """-mean_i log softmax over row i (self excluded, positive included)."""
    n = sim.shape[0]
    logits = sim / tau
    logits = logits.masked_fill(torch.eye(n, dtype=torch.bool), float("-inf"))
    pos = logits[torch.arange(n), pair_index]
    return (torch.logsumexp(logits, dim=1) - pos).mean()


def _info_nce_queue(pos_sim: Tensor, neg_sim: Tensor, tau: float) -> Tensor:
    """-mean_i log [exp(pos_i/tau) / (exp(pos_i/tau) + sum_j exp(neg_ij/tau))]."""
    logits = torch.cat([pos_sim[:, None], neg_sim], dim=1) / tau
    return (torch.logsumexp(logits, dim=1) - pos_sim / tau).mean()


def clip_contrastive_simclr(features: Tensor, pair_index, tau: float) -> Tensor:
    """In-batch contrastive loss over 2N clip features with same-video pairing."""
    if tau <= 0:
        raise ConfigurationError(f"tau must be positive, got {tau}")
    _check_unit(features, "clip features")
    pair_index = _check_pairing(pair_index, features.shape[0])
    return _info_nce_in_batch(features @ features.T, pair_index, tau)


def clip_contrastive_moco(queries: Tensor, keys_pos: Tensor, queue: Tensor, tau: float) -> Tensor:
    """Queue-based contrastive loss; queue rows are detached negatives."""
    if tau <= 0:
        raise ConfigurationError(f"tau must be positive, got {tau}")
    if queue.shape[0] == 0:
        raise ConfigurationError("negative queue is empty")
    _check_unit(queries, "query features")
    _check_unit(keys_pos, "key features")
    _check_unit(queue, "queue features")
    pos = (queries * keys_pos).sum(dim=-1)
    neg = queries @ queue.T
    return _info_nce_queue(pos, neg, tau)


def rank_term(sim_neg, sim_pos, theta: float) -> Tensor:
    """Logistic ranking penalty log(1 + exp((sim_neg - sim_pos)/theta)), softplus form."""
    if theta <= 0:
        raise ConfigurationError(f"theta must be positive, got {theta}")
    t = torch.as_tensor(sim_neg, dtype=torch.float64) - torch.as_tensor(sim_pos, dtype=torch.float64)
    return F.softplus(t / theta, threshold=_SOFTPLUS_THRESHOLD)


@dataclass(frozen=True)
class RankingSets:
    """Anchor-wise positive/negative index sets over the 2S concatenated parts.

    Parts 0..S-1 come from the first dual representation, parts S..2S-1 from
    the second. For each anchor, the positive set is the same-segment part of
    the other representation; negatives are every part of a different segment
    from either representation.
    """

    segments: int
    anchors: tuple[int, ...]
    positives: tuple[tuple[int, ...], ...]
    negatives: tuple[tuple[int, ...], ...]


def _ranking_index_sets(segments: int) -> RankingSets:
    anchors = tuple(range(2 * segments))
    positives = []
    negatives = []
    for j in anchors:
        k = j % segments
        positives.append((j + segments if j < segments else j - segments,))
        negatives.append(tuple(i for i in anchors if i % segments != k))
    return RankingSets(segments=segments, anchors=anchors,
                       positives=tuple(positives), negatives=tuple(negatives))


def build_ranking_sets(rep_a: Tensor, rep_b: Tensor) -> RankingSets:
    """Ranking sets for one pair of dual representations (S, d)."""
    if rep_a.shape != rep_b.shape:
        raise ShapeError(f"dual representations differ in shape: {tuple(rep_a.shape)} vs {tuple(rep_b.shape)}")
    return _ranking_index_sets(rep_a.shape[-2])


def _rank_loss(reps_a: Tensor, reps_b: Tensor, theta: float) -> Tensor:
    if theta <= 0:
        raise ConfigurationError(f"theta must be positive, got {theta}")
    if reps_a.ndim != 3 or reps_a.shape != reps_b.shape:
        raise ShapeError("rank loss expects matching (batch, segments, dim) tensors")
    if reps_a.shape[0] == 0:
        raise ConfigurationError("rank loss over an empty batch")
    _check_unit(reps_a, "dual parts")
    _check_unit(reps_b, "dual parts")
    sets = _ranking_index_sets(reps_a.shape[1])
    parts = torch.cat([reps_a, reps_b], dim=1)          # (B, 2S, d)
    sims = parts @ parts.transpose(1, 2)                # (B, 2S, 2S)
    total = sims.new_zeros(())
    for j, pos, negs in zip(sets.anchors, sets.positives, sets.negatives):
        t = sims[:, j, list(negs)] - sims[:, j, list(pos)]
        total = total + F.softplus(t / theta, threshold=_SOFTPLUS_THRESHOLD).sum()
    return total


def rank_loss_unaug(reps_orig: Tensor, reps_shuffled: Tensor, theta: float) -> Tensor:
    """Ranking loss anchored on the raw clips' dual reps against the shuffled
    clips' dual reps. The shuffled reps must already be re-ordered to canonical
    segment order (part k = feature of original segment k)."""
    return _rank_loss(reps_orig, reps_shuffled, theta)


def rank_loss_aug(reps_augmented: Tensor, reps_shuffled: Tensor, theta: float) -> Tensor:
    """Same structure as rank_loss_unaug, anchored on the augmented clips."""
    return _rank_loss(reps_augmented, reps_shuffled, theta)


def rank_loss_total(unaug, aug):
    """Final ranking loss: equal halves of the two variants."""
    return 0.5 * unaug + 0.5 * aug


def tc_sim(rep_i: Tensor, rep_j: Tensor) -> Tensor:
    """Mean of all S^2 pairwise part dot products between two dual reps."""
    if rep_i.shape != rep_j.shape:
        raise ShapeError(f"dual representations differ in shape: {tuple(rep_i.shape)} vs {tuple(rep_j.shape)}")
    _check_unit(rep_i, "dual parts")
    _check_unit(rep_j, "dual parts")
    return (rep_i.mean(dim=-2) * rep_j.mean(dim=-2)).sum(dim=-1)


def _tc_sim_matrix(reps: Tensor) -> Tensor:
    means = reps.mean(dim=-2)
    return means @ means.T


def tc_contrast_simclr(reps: Tensor, pair_index, tau_tc: float) -> Tensor:
    """Temporal-coherence contrastive loss over 2N dual reps (in-batch negatives)."""
    if tau_tc <= 0:
        raise ConfigurationError(f"tau_tc must be positive, got {tau_tc}")
    if reps.ndim != 3:
        raise ShapeError("expected dual reps of shape (batch, segments, dim)")
    _check_unit(reps, "dual parts")
    pair_index = _check_pairing(pair_index, reps.shape[0])
    return _info_nce_in_batch(_tc_sim_matrix(reps), pair_index, tau_tc)


def tc_contrast_moco(reps: Tensor, reps_pos: Tensor, dual_queue: Tensor, tau_tc: float) -> Tensor:
    """Queue-based temporal-coherence contrastive loss over dual reps."""
    if tau_tc <= 0:
        raise ConfigurationError(f"tau_tc must be positive, got {tau_tc}")
    if dual_queue.shape[0] == 0:
        raise ConfigurationError("dual negative queue is empty")
    if reps.shape != reps_pos.shape or reps.shape[1:] != dual_queue.shape[1:]:
        raise ShapeError("dual reps, positives and queue must share (segments, dim)")
    _check_unit(reps, "dual parts")
    _check_unit(reps_pos, "dual parts")
    _check_unit(dual_queue, "dual queue parts")
    pos = (reps.mean(dim=1) * reps_pos.mean(dim=1)).sum(dim=-1)
    neg = reps.mean(dim=1) @ dual_queue.mean(dim=1).T
    return _info_nce_queue(pos, neg, tau_tc)


def total_loss(loss_clip, loss_rank, loss_tc, lambda1: float, lambda2: float):
    """L = L_c + lambda1 * L_rank + lambda2 * L_tc."""
    return loss_clip + lambda1 * loss_rank + lambda2 * loss_tc


def order_prediction_loss(logits: Tensor, true_permutation: Tensor) -> Tensor:
    """Cross-entropy of permutation-class logits against the applied shuffle index."""
    if logits.ndim != 2:
        raise ShapeError("logits must be (batch, num_permutations)")
    target = torch.as_tensor(true_permutation, dtype=torch.long)
    if target.shape != (logits.shape[0],):
        raise ShapeError("one permutation index per batch row required")
    if torch.any(target < 0) or torch.any(target >= logits.shape[1]):
        raise ConfigurationError("permutation index out of range of the logits")
    picked = logits[torch.arange(logits.shape[0]), target]
    return (torch.logsumexp(logits, dim=1) - picked).mean()


def decomposition_check(features: Tensor, pair_index, tau: float) -> tuple[float, float, float]:
    """Evaluate the alignment/uniformity split of the in-batch contrastive loss.

    lhs is the loss itself; rhs is the mean positive-similarity term plus the
    mean log of (positive exponential + all non-pair exponentials). The two
    agree exactly because the loss's denominator over k != i is the positive
    term plus everything outside {i, i+}.
    """
    _check_unit(features, "clip features")
    pair_index = _check_pairing(pair_index, features.shape[0])
    lhs = clip_contrastive_simclr(features, pair_index, tau)

    n = features.shape[0]
    sim = features @ features.T / tau
    pos = sim[torch.arange(n), pair_index]
    term1 = -pos.mean()
    mask = torch.eye(n, dtype=torch.bool)
    mask[torch.arange(n), pair_index] = True            # exclude self and positive
    rest = sim.masked_fill(mask, float("-inf"))
    term2 = torch.logsumexp(torch.cat([pos[:, None], rest], dim=1), dim=1).mean()
    rhs = term1 + term2
    return float(lhs), float(rhs), abs(float(lhs) - float(rhs))


def log2_penalty() -> float:
    """The fixed penalty a rank term pays at zero similarity margin."""
    return math.log(2.0)
