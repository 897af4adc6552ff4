"""MAP class memberships by best-improvement label switching.

Each candidate assignment is scored by the log-posterior of the logit state:
the blockmodel log-likelihood at the EKF-updated state plus the Gaussian
log-prior ``-1/2 (psi - psi_pred)^T R_pred^{-1} (psi - psi_pred)``. All
``n (k - 1)`` single-node relabelings of a sweep are scored in one batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import log_expit

from .ekf import (
    FilterState,
    StateSpaceConfig,
    _initial_predicted,
    diffuse_init,
    logistic_slope,
    logistic_vec,
    plugin_obs_cov,
    predict,
    update,
)
from .exceptions import InvalidAssignmentError, NumericalFailureError
from .netcore import ClassAssignment, block_counts, clamp_density, possible_edges, vec
from .ssbm import spectral_init

__all__ = [
    "PosteriorScore",
    "SearchConfig",
    "log_posterior",
    "local_search",
    "fit_step",
    "fit_sequence",
]


@dataclass(frozen=True)
class PosteriorScore:
    """Log-posterior up to an additive constant, split into its two terms."""

    data: float
    prior: float

    @property
    def value(self):
        return self.data + self.prior


@dataclass(frozen=True)
class SearchConfig:
    """Local search settings.

    ``min_class_size`` guards the diagonal blocks: moves that would leave a
    class with fewer members are skipped.
    """

    max_iter: int = 20
    min_class_size: int = 2

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.min_class_size < 1:
            raise ValueError("min_class_size must be >= 1")


def _data_term(m, n, psi):
    return np.sum(m * log_expit(psi) + (n - m) * log_expit(-psi), axis=-1)


def log_posterior(stats, psi, pred_mean=None, pred_cov=None) -> PosteriorScore:
    """Log-posterior of state ``psi`` given block counts and the predicted state.

    With ``pred_mean=None`` the prior is flat and only the likelihood remains.
    """
    psi = np.asarray(psi, dtype=float).ravel()
    data = float(_data_term(vec(stats.m), vec(stats.n), psi))
    if pred_mean is None:
        return PosteriorScore(data, 0.0)
    delta = psi - np.asarray(pred_mean, dtype=float).ravel()
    R = np.asarray(pred_cov, dtype=float)
    try:
        cf = linalg.cho_factor(R, lower=True)
    except linalg.LinAlgError:
        jitter = 1e-10 * np.trace(R) / R.shape[0]
        try:
            cf = linalg.cho_factor(R + jitter * np.eye(R.shape[0]), lower=True)
        except linalg.LinAlgError as exc:
            raise NumericalFailureError("predicted covariance is singular after jitter") from exc
    prior = -0.5 * float(delta @ linalg.cho_solve(cf, delta))
    return PosteriorScore(data, prior)


class _Scorer:
    """Batched EKF update plus log-posterior for many candidate block counts.

    The innovation covariance differs between candidates only through the
    diagonal noise term, so ``H R H`` is formed once. For the prior term,
    ``delta = R H x`` with ``x = S^{-1} (y - h)``, hence
    ``delta^T R^{-1} delta = (H x)^T R (H x)`` and ``R`` is never inverted.
    """

    def __init__(self, pred: FilterState | None):
        self.pred = pred
        if pred is not None:
            self.mu = pred.mean
            self.R = pred.cov
            self.theta = logistic_vec(self.mu)
            self.H = logistic_slope(self.mu)
            self.HRH = self.H[:, None] * self.R * self.H[None, :]

    def __call__(self, m, n):
        """Score a batch of block-count matrices of shape ``(B, k, k)``."""
        mv = vec(m).astype(float)
        nv = vec(n).astype(float)
        y = clamp_density(mv / nv, nv)
        if self.pred is None:
            psi = np.log(y) - np.log1p(-y)
            return psi, _data_term(mv, nv, psi), np.zeros(len(psi))
        s2 = np.maximum(self.theta * (1.0 - self.theta) / nv, 0.25 / nv**2)
        S = self.HRH[None] + s2[:, :, None] * np.eye(len(self.mu))[None]
        try:
            x = np.linalg.solve(S, (y - self.theta)[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise NumericalFailureError("innovation covariance singular for a candidate") from exc
        u = self.H * x
        delta = u @ self.R
        psi = self.mu + delta
        prior = -0.5 * np.sum(u * delta, axis=-1)
        return psi, _data_term(mv, nv, psi), prior


def _neighbours(W, labels, k, min_size):
    """All admissible single-node relabelings and their block counts.

    Returns node ids, target classes, and ``m``, ``n`` of shape ``(B, k, k)``,
    ordered by node id then class id.
    """
    n_nodes = len(labels)
    Z = np.zeros((n_nodes, k))
    Z[np.arange(n_nodes), labels] = 1.0
    out_to = W @ Z  # out_to[i, c]: edges from i into class c
    in_from = W.T @ Z  # in_from[i, c]: edges from class c into i
    m = Z.T @ W @ Z
    sizes = np.bincount(labels, minlength=k)

    nodes = np.repeat(np.arange(n_nodes), k)
    targets = np.tile(np.arange(k), n_nodes)
    keep = (targets != labels[nodes]) & (sizes[labels[nodes]] > min_size)
    nodes, targets = nodes[keep], targets[keep]

    shift = np.zeros((len(nodes), k))
    shift[np.arange(len(nodes)), targets] += 1.0
    shift[np.arange(len(nodes)), labels[nodes]] -= 1.0
    m_new = m[None] + shift[:, :, None] * out_to[nodes][:, None, :] + in_from[nodes][:, :, None] * shift[:, None, :]
    n_new = possible_edges(sizes[None, :] + shift.astype(np.int64))
    return nodes, targets, np.rint(m_new), n_new


def _current(W, labels, k):
    Z = np.zeros((len(labels), k))
    Z[np.arange(len(labels)), labels] = 1.0
    m = Z.T @ W @ Z
    n = possible_edges(np.bincount(labels, minlength=k))
    return np.rint(m)[None], n[None]


def local_search(W, labels, k, pred: FilterState | None, search=SearchConfig()):
    """Hill-climb on the log-posterior from ``labels``.

    Parameters
    ----------
    W : ndarray (n, n)
        Dense adjacency of the current snapshot.
    labels : ndarray (n,)
        Starting assignment.
    pred : FilterState or None
        Predicted state ``psi^{t|t-1}``; None for a flat prior.

    Returns
    -------
    labels : ndarray
        Locally optimal assignment.
    trace : list of float
        Accepted log-posterior values, one per iteration plus the start.
    """
    W = np.asarray(W, dtype=float)
    labels = np.asarray(labels, dtype=np.int64).copy()
    score = _Scorer(pred)
    _, data, prior = score(*_current(W, labels, k))
    current = float(data[0] + prior[0])
    trace = [current]
    for _ in range(search.max_iter):
        nodes, targets, m_new, n_new = _neighbours(W, labels, k, search.min_class_size)
        if len(nodes) == 0:
            break
        _, data, prior = score(m_new, n_new)
        total = data + prior
        best = int(np.argmax(total))  # first maximum: lowest node id, then class id
        if not total[best] > current:
            break
        labels[nodes[best]] = targets[best]
        current = float(total[best])
        trace.append(current)
    return labels, trace


def _carry_over(W, prev_labels, n_nodes, k, score):
    """Extend/trim the previous assignment to the current node set.

    Departed nodes (ids >= n_nodes) are dropped. New nodes are added one at a
    time, each to the class with the highest log-posterior over the nodes
    assigned so far.
    """
    labels = np.full(n_nodes, -1, dtype=np.int64)
    keep = min(n_nodes, len(prev_labels))
    labels[:keep] = prev_labels[:keep]
    for v in range(keep, n_nodes):
        cands = []
        for c in range(k):
            trial = labels.copy()
            trial[v] = c
            known = trial >= 0
            Z = np.zeros((n_nodes, k))
            Z[np.flatnonzero(known), trial[known]] = 1.0
            cands.append((Z.T @ W @ Z, possible_edges(Z.sum(axis=0).astype(np.int64))))
        m = np.stack([c[0] for c in cands])
        n = np.stack([c[1] for c in cands])
        ok = np.all(n > 0, axis=(1, 2))
        if not ok.any():
            # not enough nodes yet to populate every block; fill classes in order
            labels[v] = int(np.argmin(np.bincount(labels[labels >= 0], minlength=k)))
            continue
        _, data, prior = score(np.where(ok[:, None, None], m, 0), np.where(ok[:, None, None], n, 1))
        total = np.where(ok, data + prior, -np.inf)
        labels[v] = int(np.argmax(total))
    return labels


def fit_step(snapshot, prev_assignment, prev_state, cfg: StateSpaceConfig, search=SearchConfig()):
    """A posteriori fit of one snapshot.

    Starts from ``prev_assignment``, runs the local search scored against the
    prediction from ``prev_state`` and returns the EKF state updated under the
    final assignment.

    If ``prev_state`` is None the step is treated as the first one: the prior
    is flat (diffuse) when ``cfg.diffuse`` and the state is initialized from
    the final block densities.

    Returns
    -------
    (FilterState, ClassAssignment, PosteriorScore)
    """
    k = prev_assignment.k
    if prev_state is None:
        pred = None if cfg.diffuse else _initial_predicted(cfg, t=snapshot.t)
    else:
        pred = predict(prev_state, cfg)
    W = snapshot.adjacency().astype(float)
    labels = np.asarray(prev_assignment.labels)
    if len(labels) != snapshot.n_nodes:
        labels = _carry_over(W, labels, snapshot.n_nodes, k, _Scorer(pred))
    sizes = np.bincount(labels, minlength=k)
    if np.any(sizes < search.min_class_size):
        raise InvalidAssignmentError(
            f"carried-over assignment has classes smaller than {search.min_class_size}: {sizes.tolist()}"
        )
    labels, _ = local_search(W, labels, k, pred, search)
    assignment = ClassAssignment(labels, k)
    stats = block_counts(snapshot, assignment)
    if pred is None:
        state = diffuse_init(stats, t=snapshot.t)
        score = log_posterior(stats, state.mean)
    else:
        pred = FilterState(pred.mean, pred.cov, t=snapshot.t, phase=pred.phase)
        state = update(pred, vec(stats.clamped()), plugin_obs_cov(pred.mean, stats.n))
        score = log_posterior(stats, state.mean, pred.mean, pred.cov)
    return state, assignment, score


def fit_sequence(snapshots, k, cfg: StateSpaceConfig, search=SearchConfig(), seed=None, init=None):
    """A posteriori fit of a whole snapshot sequence.

    The first assignment comes from spectral clustering (or ``init``); later
    steps start from the previous step's result.

    Returns lists of states, assignments and scores.
    """
    states, assignments, scores = [], [], []
    state = None
    assignment = init
    for snap in snapshots:
        if assignment is None:
            assignment = spectral_init(snap, k, seed=seed, min_size=search.min_class_size)
        state, assignment, score = fit_step(snap, assignment, state, cfg, search)
        states.append(state)
        assignments.append(assignment)
        scores.append(score)
    return states, assignments, scores
