"""scikit-learn style wrappers around the filtering, clustering and prediction code.

``X`` is always a snapshot sequence: a list of :class:`~dynsbm.netcore.Snapshot`,
a ``(T, n, n)`` adjacency array, or a list of dense or sparse adjacency
matrices.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_memberships, check_snapshots
from .aposteriori import SearchConfig, fit_sequence
from .ekf import StateSpaceConfig, logistic_vec, predict, run_filter
from .linkpred import auc, blend, block_predict, ewma_predict
from .netcore import block_counts, unvec
from .ssbm import spectral_init

__all__ = [
    "AprioriEKF",
    "AposterioriEKF",
    "SpectralSSBM",
    "EWMALinkPredictor",
    "BlendedLinkPredictor",
]


def _theta(states):
    return np.stack([unvec(logistic_vec(s.mean)) for s in states])


class AprioriEKF(BaseEstimator):
    """Track block edge probabilities with known class memberships.

    Parameters
    ----------
    s_diag, s_nb : float
        Process noise variance of each logit cell and covariance between cells
        sharing a row or column of the block matrix.
    transition : ndarray, optional
        State transition matrix; identity (random walk) by default.

    Attributes
    ----------
    states_ : list of FilterState
        Posterior state at each step.
    theta_ : ndarray of shape (T, k, k)
        Posterior mean edge probabilities (logistic of the state mean).
    """

    def __init__(self, s_diag=0.01, s_nb=0.0025, transition=None):
        self.s_diag = s_diag
        self.s_nb = s_nb
        self.transition = transition

    def _config(self, k):
        return StateSpaceConfig.from_hyperparams(k, self.s_diag, self.s_nb, transition=self.transition)

    def fit(self, X, memberships):
        snapshots = check_snapshots(X)
        assignments = check_memberships(memberships, snapshots)
        self.k_ = assignments[0].k
        stats = [block_counts(s, a) for s, a in zip(snapshots, assignments)]
        self.states_ = run_filter(stats, self._config(self.k_))
        self.assignments_ = assignments
        self.theta_ = _theta(self.states_)
        return self

    def transform(self, X=None):
        """Posterior logit states, shape ``(T, k*k)``."""
        check_is_fitted(self, "states_")
        return np.stack([s.mean for s in self.states_])

    def predict(self, X=None):
        """One-step-ahead block probabilities, shape ``(k, k)``."""
        check_is_fitted(self, "states_")
        pred = predict(self.states_[-1], self._config(self.k_))
        return unvec(logistic_vec(pred.mean))


class AposterioriEKF(BaseEstimator):
    """Jointly track block probabilities and class memberships.

    Each step runs a best-improvement local search over single-node moves,
    scored by the posterior given the EKF prediction from the previous step.

    Parameters
    ----------
    n_classes : int
    s_diag, s_nb : float
        Process noise hyperparameters.
    max_iter : int
        Local search sweeps per step.
    min_class_size : int
        Moves that would shrink a class below this size are skipped.
    random_state : int, optional
        Seed of the spectral initialization at the first step.

    Attributes
    ----------
    labels_ : ndarray of shape (T, n)
    states_ : list of FilterState
    theta_ : ndarray of shape (T, k, k)
    scores_ : ndarray of shape (T,)
        Log-posterior of the final assignment at each step.
    """

    def __init__(self, n_classes=2, s_diag=0.01, s_nb=0.0025, max_iter=20, min_class_size=2, random_state=None):
        self.n_classes = n_classes
        self.s_diag = s_diag
        self.s_nb = s_nb
        self.max_iter = max_iter
        self.min_class_size = min_class_size
        self.random_state = random_state

    def fit(self, X, y=None):
        snapshots = check_snapshots(X)
        cfg = StateSpaceConfig.from_hyperparams(self.n_classes, self.s_diag, self.s_nb)
        search = SearchConfig(max_iter=self.max_iter, min_class_size=self.min_class_size)
        states, assignments, scores = fit_sequence(snapshots, self.n_classes, cfg, search, seed=self.random_state)
        self.states_ = states
        self.assignments_ = assignments
        self.labels_ = np.stack([a.labels for a in assignments])
        self.theta_ = _theta(states)
        self.scores_ = np.array([s.value for s in scores])
        return self

    def fit_predict(self, X, y=None):
        return self.fit(X).labels_


class SpectralSSBM(BaseEstimator):
    """Static blockmodel fitted independently at each step by spectral clustering.

    Attributes
    ----------
    labels_ : ndarray of shape (T, n)
    theta_ : ndarray of shape (T, k, k)
        Clamped block densities under the fitted classes.
    """

    def __init__(self, n_classes=2, min_class_size=2, random_state=None):
        self.n_classes = n_classes
        self.min_class_size = min_class_size
        self.random_state = random_state

    def fit(self, X, y=None):
        snapshots = check_snapshots(X)
        self.assignments_ = [
            spectral_init(s, self.n_classes, seed=self.random_state, min_size=self.min_class_size) for s in snapshots
        ]
        self.labels_ = np.stack([a.labels for a in self.assignments_])
        self.theta_ = np.stack([block_counts(s, a).clamped() for s, a in zip(snapshots, self.assignments_)])
        return self

    def fit_predict(self, X, y=None):
        return self.fit(X).labels_


class EWMALinkPredictor(BaseEstimator):
    """Score the next snapshot by an exponentially weighted average of past adjacencies.

    ``lam`` is the weight of the previous average; ``lam=0`` repeats the last
    snapshot.
    """

    def __init__(self, lam=0.5):
        self.lam = lam

    def fit(self, X, y=None):
        snapshots = check_snapshots(X)
        self.n_nodes_ = max(s.n_nodes for s in snapshots)
        self.scores_ = ewma_predict(snapshots, self.lam, self.n_nodes_)
        return self

    def predict(self, X=None):
        """Scores for every pair at the next step, shape ``(n, n)``."""
        check_is_fitted(self, "scores_")
        return self.scores_

    def score(self, X, y=None):
        """AUC of the fitted scores against the snapshot ``X``."""
        return auc(self.predict(), check_snapshots(X)[0])


class BlendedLinkPredictor(BaseEstimator):
    """Blend of EKF block probabilities and EWMA edge scores.

    With ``memberships`` passed to :meth:`fit` the classes are taken as known
    (a priori); otherwise they are estimated along with the states.

    Parameters
    ----------
    n_classes : int
        Used only when memberships are estimated.
    lam : float
        EWMA memory.
    w_block : float
        Weight of the block scores in ``[0, 1]``.
    """

    def __init__(self, n_classes=2, lam=0.5, w_block=0.5, s_diag=0.01, s_nb=0.0025, random_state=None):
        self.n_classes = n_classes
        self.lam = lam
        self.w_block = w_block
        self.s_diag = s_diag
        self.s_nb = s_nb
        self.random_state = random_state

    def fit(self, X, memberships=None):
        snapshots = check_snapshots(X)
        if memberships is None:
            model = AposterioriEKF(self.n_classes, self.s_diag, self.s_nb, random_state=self.random_state)
            model.fit(snapshots)
        else:
            model = AprioriEKF(self.s_diag, self.s_nb).fit(snapshots, memberships)
        self.model_ = model
        n = max(s.n_nodes for s in snapshots)
        self.block_scores_ = block_predict(model.states_[-1], model.assignments_[-1])
        self.ewma_scores_ = ewma_predict(snapshots, self.lam, n)
        return self

    def predict(self, X=None):
        check_is_fitted(self, "block_scores_")
        return blend(self.block_scores_, self.ewma_scores_, self.w_block)

    def score(self, X, y=None):
        return auc(self.predict(), check_snapshots(X)[0])
