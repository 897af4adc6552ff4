"""Ground-truth scoring: adjusted Rand index and state tracking error."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .exceptions import DimensionError
from .netcore import unvec, vec

__all__ = [
    "MetricReport",
    "adjusted_rand",
    "contingency",
    "align_permutation",
    "permute_state",
    "tracking_mse",
]


def _labels(x):
    return np.asarray(getattr(x, "labels", x))


def contingency(a, b):
    """Contingency table of two labelings (rows: classes of ``a``)."""
    a, b = _labels(a), _labels(b)
    if a.shape != b.shape:
        raise DimensionError(f"labelings have {a.size} and {b.size} nodes")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max(initial=-1) + 1, ib.max(initial=-1) + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    return table


def _pairs(x):
    x = np.asarray(x, dtype=float)
    return x * (x - 1) / 2


def adjusted_rand(a, b) -> float:
    """Hubert-Arabie adjusted Rand index.

    When the expected and maximum index coincide (both partitions trivial in
    the same way) the result is 1 for identical partitions and 0 otherwise.
    """
    table = contingency(a, b)
    n = table.sum()
    sum_cells = _pairs(table).sum()
    sum_a = _pairs(table.sum(axis=1)).sum()
    sum_b = _pairs(table.sum(axis=0)).sum()
    total = _pairs(n)
    expected = sum_a * sum_b / total if total > 0 else 0.0
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        same = table.shape[0] == table.shape[1] and np.count_nonzero(table) == table.shape[0]
        return 1.0 if same else 0.0
    return float((sum_cells - expected) / (max_index - expected))


def align_permutation(estimated, truth, k):
    """Class permutation ``perm`` maximizing agreement: estimated class ``a`` -> true ``perm[a]``.

    Exhaustive for ``k <= 8``, Hungarian assignment beyond.
    """
    est, tru = _labels(estimated), _labels(truth)
    C = np.zeros((k, k), dtype=np.int64)
    np.add.at(C, (est, tru), 1)
    if k <= 8:
        best, best_perm = -1, None
        for perm in itertools.permutations(range(k)):
            score = C[np.arange(k), perm].sum()
            if score > best:
                best, best_perm = score, perm
        return np.asarray(best_perm)
    rows, cols = linear_sum_assignment(-C)
    perm = np.empty(k, dtype=np.int64)
    perm[rows] = cols
    return perm


def permute_state(psi, perm):
    """Relabel the classes of a vectorized block state: cell ``(a, b)`` moves to ``(perm[a], perm[b])``."""
    P = unvec(psi)
    out = np.empty_like(P)
    perm = np.asarray(perm)
    out[np.ix_(perm, perm)] = P
    return vec(out)


def tracking_mse(estimates, truth, assignments=None) -> float:
    """Mean over time of ``||psi_hat_t - psi_t||^2`` on the logit scale.

    Parameters
    ----------
    estimates : sequence of FilterState or of vectors
    truth : GroundTruth
    assignments : sequence of ClassAssignment, optional
        Estimated classes. When given, each estimate is first relabeled by the
        permutation that best matches the true classes at that step.
    """
    psi_true = np.asarray(truth.psi)
    if len(estimates) != len(psi_true):
        raise DimensionError(f"{len(estimates)} estimates for {len(psi_true)} time steps")
    errs = []
    for t, est in enumerate(estimates):
        psi_hat = np.asarray(est if isinstance(est, np.ndarray) else getattr(est, "mean", est), dtype=float)
        if psi_hat.shape != psi_true[t].shape:
            raise DimensionError(f"state length {psi_hat.size} vs truth {psi_true[t].size}")
        if assignments is not None:
            k = int(round(np.sqrt(psi_hat.size)))
            perm = align_permutation(assignments[t], truth.assignments[t], k)
            psi_hat = permute_state(psi_hat, perm)
        errs.append(np.sum((psi_hat - psi_true[t]) ** 2))
    return float(np.mean(errs))


@dataclass
class MetricReport:
    """Scalar metrics per run plus optional per-step series, with aggregates."""

    runs: list = field(default_factory=list)
    series: dict = field(default_factory=dict)

    def add(self, **metrics):
        self.runs.append({k: float(v) for k, v in metrics.items()})

    def values(self, name):
        return np.array([r[name] for r in self.runs if name in r])

    def aggregate(self):
        names = sorted({k for r in self.runs for k in r})
        out = {}
        for name in names:
            v = self.values(name)
            q1, med, q3 = np.percentile(v, [25, 50, 75])
            out[name] = {
                "median": float(med),
                "q1": float(q1),
                "q3": float(q3),
                "min": float(v.min()),
                "max": float(v.max()),
                "n": int(v.size),
            }
        return out

    def to_dict(self):
        return {"runs": self.runs, "series": self.series, "aggregate": self.aggregate()}
