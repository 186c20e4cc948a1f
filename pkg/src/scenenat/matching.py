"""Bipartite set-matching losses: Hungarian assignment of ground-truth
relation triplets to prediction queries, the matched triplet loss, and the
masked-token reconstruction loss.

The matching cost uses negative (plain) probabilities; the loss itself uses
cross-entropy. The two are not interchangeable, hence both code paths.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import tensor as tn
from .relations import RELATION_SET, RelationTriplet, predicate_id
from .scene import SceneCodec
from .tensor import Tensor

log = logging.getLogger(__name__)

_truncated_triplets = 0


def truncated_triplet_count() -> int:
    return _truncated_triplets


@dataclass
class LossWeights:
    subject: float = 1.0
    predicate: float = 1.0
    object: float = 1.0
    category: float = 1.0
    appearance: float = 1.0
    position: float = 1.0
    size: float = 1.0
    rotation: float = 1.0
    triplet: float = 1.0
    null_class: float = 0.1

    def __post_init__(self):
        for name, value in vars(self).items():
            if value < 0:
                raise ValueError(f"loss weight {name} must be non-negative")


def hungarian(cost: np.ndarray) -> np.ndarray:
    """Exact minimum-cost assignment of J rows to distinct columns, J <= K.

    Shortest-augmenting-path formulation with potentials; deterministic
    (lowest index wins among equal-cost alternatives). Returns sigma with
    sigma[j] the column assigned to row j.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError("cost must be a matrix")
    rows, cols = cost.shape
    if rows > cols:
        raise ValueError(f"need rows <= cols, got {rows}x{cols}")
    if not np.isfinite(cost).all():
        raise ValueError("cost matrix must be finite")
    INF = np.inf
    u = np.zeros(rows + 1)
    v = np.zeros(cols + 1)
    match = np.zeros(cols + 1, dtype=np.int64)  # column -> row (1-based, 0 free)
    way = np.zeros(cols + 1, dtype=np.int64)
    for i in range(1, rows + 1):
        match[0] = i
        j0 = 0
        minv = np.full(cols + 1, INF)
        used = np.zeros(cols + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match[j0]
            delta = INF
            j1 = 0
            for j in range(1, cols + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(cols + 1):
                if used[j]:
                    u[match[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
    sigma = np.zeros(rows, dtype=np.int64)
    for j in range(1, cols + 1):
        if match[j] > 0:
            sigma[match[j] - 1] = j - 1
    return sigma


def _softmax_np(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def matching_cost(
    gt: list[tuple[int, int, int]],
    subject_logits: np.ndarray,
    predicate_logits: np.ndarray,
    object_logits: np.ndarray,
) -> np.ndarray:
    """Cost[j, k] = -(P_s + P_p + P_o) of ground-truth triplet j under query k."""
    n_q = subject_logits.shape[0]
    if len(gt) > n_q:
        raise ValueError(f"{len(gt)} ground-truth triplets exceed {n_q} queries")
    p_s = _softmax_np(subject_logits)
    p_p = _softmax_np(predicate_logits)
    p_o = _softmax_np(object_logits)
    cost = np.zeros((len(gt), n_q))
    for j, (s, p, o) in enumerate(gt):
        cost[j] = -(p_s[:, s] + p_p[:, p] + p_o[:, o])
    return cost


def encode_triplets(triplets: list[RelationTriplet], codec: SceneCodec) -> list[tuple[int, int, int]]:
    """(subject id, predicate id, object id) class targets, canonically sorted.

    Sorting makes the eventual assignment independent of input list order,
    so the loss is bitwise permutation-invariant.
    """
    encoded = [
        (codec.category_id(t.subject), predicate_id(t.predicate), codec.category_id(t.object))
        for t in triplets
    ]
    return sorted(encoded)


def triplet_loss(
    gt: list[tuple[int, int, int]],
    subject_logits: Tensor,
    predicate_logits: Tensor,
    object_logits: Tensor,
    weights: LossWeights,
) -> Tensor:
    """Hungarian-matched weighted cross-entropy over all queries (Eq. sum form).

    Unmatched queries are supervised with the null class (last index of each
    head), down-weighted by weights.null_class.
    """
    global _truncated_triplets
    n_q = subject_logits.data.shape[0]
    null_s = subject_logits.data.shape[-1] - 1
    null_p = predicate_logits.data.shape[-1] - 1
    null_o = object_logits.data.shape[-1] - 1
    if len(gt) > n_q:
        _truncated_triplets += len(gt) - n_q
        log.warning("truncating %d ground-truth triplets to %d queries", len(gt), n_q)
        gt = gt[:n_q]
    targets_s = np.full(n_q, null_s, dtype=np.int64)
    targets_p = np.full(n_q, null_p, dtype=np.int64)
    targets_o = np.full(n_q, null_o, dtype=np.int64)
    if gt:
        cost = matching_cost(gt, subject_logits.data, predicate_logits.data, object_logits.data)
        sigma = hungarian(cost)
        for j, (s, p, o) in enumerate(gt):
            targets_s[sigma[j]] = s
            targets_p[sigma[j]] = p
            targets_o[sigma[j]] = o

    def weighted_ce(logits, targets, null_id, lam):
        class_w = np.ones(logits.data.shape[-1])
        class_w[null_id] = weights.null_class
        return tn.scale(tn.cross_entropy(logits, targets, class_weights=class_w, reduction="sum"), lam)

    loss = weighted_ce(subject_logits, targets_s, null_s, weights.subject)
    loss = tn.add(loss, weighted_ce(predicate_logits, targets_p, null_p, weights.predicate))
    loss = tn.add(loss, weighted_ce(object_logits, targets_o, null_o, weights.object))
    return loss


ATTRIBUTE_COLUMNS = {
    "category": (0, 1),
    "appearance": (1, 5),
    "position": (5, 8),
    "size": (8, 11),
    "rotation": (11, 12),
}


def recon_loss(logits: dict[str, Tensor], targets: np.ndarray, weights: LossWeights, reduction: str = "mean") -> Tensor:
    """Per-attribute cross-entropy over the supervised grid positions.

    logits maps attribute name to [B, N, columns, width] (category/rotation
    have a single column). targets is [B, N, 12] with -1 at unsupervised
    positions. PAD targets (empty-row filler outside the heads' vocabulary)
    are skipped. "mean" averages each attribute over its own positions;
    "sum" yields the plain negative log-likelihood total over positions.
    """
    lam = {
        "category": weights.category,
        "appearance": weights.appearance,
        "position": weights.position,
        "size": weights.size,
        "rotation": weights.rotation,
    }
    total = None
    for name, (lo, hi) in ATTRIBUTE_COLUMNS.items():
        t = logits[name]
        width = t.data.shape[-1]
        flat_logits = tn.reshape(t, (-1, width))
        flat_targets = targets[:, :, lo:hi].reshape(-1)
        selected = np.nonzero((flat_targets >= 0) & (flat_targets < width))[0]
        if selected.size == 0:
            continue
        rows = tn.embedding_lookup(flat_logits, selected)
        term = tn.cross_entropy(rows, flat_targets[selected], reduction=reduction)
        term = tn.scale(term, lam[name])
        total = term if total is None else tn.add(total, term)
    if total is None:
        total = Tensor(np.zeros((), dtype=targets_dtype(logits)))
    return total


def targets_dtype(logits: dict[str, Tensor]):
    return next(iter(logits.values())).data.dtype


def total_loss(recon: Tensor, triplet: Tensor, weights: LossWeights) -> Tensor:
    return tn.add(recon, tn.scale(triplet, weights.triplet))
