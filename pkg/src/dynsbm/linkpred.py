"""Dynamic link prediction from block probabilities and edge-level memory.

Score matrices are dense ``(n, n)`` arrays; the diagonal carries no meaning
and is ignored by :func:`auc`.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from .ekf import logistic_vec
from .exceptions import DimensionError, UndefinedMetricError
from .netcore import unvec

__all__ = [
    "ewma_predict",
    "ewma_series",
    "block_predict",
    "blend",
    "auc",
    "auc_pooled",
    "tune_blend",
]

EXACT_PAIR_LIMIT = 10**7


def _dense(snapshot, n):
    W = np.zeros((n, n))
    if snapshot.n_edges:
        W[snapshot.edges[:, 0], snapshot.edges[:, 1]] = 1.0
    return W


def ewma_series(history, lam, n_nodes=None):
    """Yield the EWMA prediction for step ``t + 1`` after each snapshot ``t``.

    ``What^{t+1} = lam * What^t + (1 - lam) * W^t`` with ``What^1 = W^1``.
    Nodes missing from a snapshot contribute zero rows.
    """
    if not 0 <= lam <= 1:
        raise ValueError("lambda must lie in [0, 1]")
    n = n_nodes or max(s.n_nodes for s in history)
    est = None
    for snap in history:
        W = _dense(snap, n)
        est = W if est is None else lam * est + (1.0 - lam) * W
        yield est


def ewma_predict(history, lam, n_nodes=None):
    """EWMA scores for the step after the last snapshot of ``history``."""
    if not history:
        raise ValueError("history must contain at least one snapshot")
    out = None
    for out in ewma_series(history, lam, n_nodes):
        pass
    return out


def block_predict(state, assignment):
    """Score each pair ``(i, j)`` by the estimated probability of its block."""
    k = assignment.k
    if state.mean.size != k * k:
        raise DimensionError(f"state has {state.mean.size} cells, assignment has k={k}")
    theta = unvec(logistic_vec(state.mean))
    c = assignment.labels
    return theta[c[:, None], c[None, :]]


def blend(block, ewma, w_block):
    """Convex combination ``w_block * block + (1 - w_block) * ewma``."""
    if not 0 <= w_block <= 1:
        raise ValueError("w_block must lie in [0, 1]")
    block, ewma = np.asarray(block, dtype=float), np.asarray(ewma, dtype=float)
    if block.shape != ewma.shape:
        raise DimensionError(f"score shapes differ: {block.shape} vs {ewma.shape}")
    return w_block * block + (1.0 - w_block) * ewma


def _pair_scores(scores, truth):
    scores = np.asarray(scores, dtype=float)
    n = truth.n_nodes
    if scores.shape[0] < n or scores.shape[1] < n:
        raise DimensionError(f"scores {scores.shape} do not cover {n} nodes")
    scores = scores[:n, :n]
    W = _dense(truth, n)
    off = ~np.eye(n, dtype=bool)
    return scores[off], W[off] > 0


def _auc_from_pairs(s, is_edge):
    pos, neg = s[is_edge], s[~is_edge]
    if len(pos) == 0 or len(neg) == 0:
        raise UndefinedMetricError("AUC needs at least one edge and one non-edge")
    if len(pos) * len(neg) <= EXACT_PAIR_LIMIT:
        neg = np.sort(neg)
        below = np.searchsorted(neg, pos, side="left")
        tied = np.searchsorted(neg, pos, side="right") - below
        return float((below.sum() + 0.5 * tied.sum()) / (len(pos) * len(neg)))
    ranks = rankdata(s)
    n_pos = len(pos)
    return float((ranks[is_edge].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * len(neg)))


def auc(scores, truth):
    """Probability that a random edge of ``truth`` outscores a random non-edge (ties count 1/2)."""
    return _auc_from_pairs(*_pair_scores(scores, truth))


def auc_pooled(scores_seq, truths):
    """AUC over all pairs of all steps pooled together (micro average)."""
    if len(scores_seq) != len(truths):
        raise DimensionError("one score matrix per truth snapshot is required")
    parts = [_pair_scores(s, t) for s, t in zip(scores_seq, truths)]
    return _auc_from_pairs(np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]))


def tune_blend(snapshots, block_scores, steps, lam_grid, w_grid):
    """Pick ``(lam, w_block)`` maximizing pooled AUC over the chosen steps.

    ``block_scores[t]`` and the EWMA after ``snapshots[: t + 1]`` both predict
    ``snapshots[t + 1]``; ``steps`` lists the indices ``t`` to score. Ties go
    to the earliest ``lam``, then the earliest ``w_block``.

    Returns ``(lam, w_block, auc)``.
    """
    n = max(s.n_nodes for s in snapshots)
    targets = [snapshots[t + 1] for t in steps]
    best = None
    for lam in lam_grid:
        ewma = list(ewma_series(snapshots, lam, n))
        for w in w_grid:
            preds = [blend(block_scores[t], ewma[t], w) for t in steps]
            score = auc_pooled(preds, targets)
            if best is None or score > best[2]:
                best = (lam, w, score)
    return best
