"""Seeded generator of dynamic SBM sequences with known states and classes."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .ekf import build_process_cov, logistic_vec, logit_vec
from .exceptions import ConfigurationError
from .netcore import ClassAssignment, Snapshot, unvec, vec

__all__ = ["SimParams", "GroundTruth", "generate", "initial_labels"]


@dataclass(frozen=True)
class SimParams:
    """Generator settings. Defaults reproduce the 128-node, 4-class benchmark."""

    n_nodes: int = 128
    k: int = 4
    theta_diag_mean: float = 0.2580
    theta_offdiag_mean: float = 0.0834
    gamma0_scale: float = 0.04
    s_diag: float = 0.01
    s_nb: float = 0.0025
    churn_fraction: float = 0.10
    T: int = 10
    directed: bool = False
    seed: int = 0
    min_class_size: int = 2

    def __post_init__(self):
        for name in ("theta_diag_mean", "theta_offdiag_mean"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ConfigurationError(f"{name} must lie in (0, 1), got {v}")
        if not 0 <= self.churn_fraction < 1:
            raise ConfigurationError("churn_fraction must lie in [0, 1)")
        if self.T < 1:
            raise ConfigurationError("T must be >= 1")
        if self.n_nodes < self.k * self.min_class_size:
            raise ConfigurationError(f"{self.n_nodes} nodes cannot fill {self.k} classes")
        if self.gamma0_scale < 0:
            raise ConfigurationError("gamma0_scale must be nonnegative")

    def to_dict(self):
        return asdict(self)

    @property
    def init_mean(self):
        """Vectorized logit of the mean edge-probability matrix."""
        k = self.k
        theta = np.full((k, k), self.theta_offdiag_mean)
        np.fill_diagonal(theta, self.theta_diag_mean)
        return vec(logit_vec(theta))

    @property
    def init_cov(self):
        return self.gamma0_scale * np.eye(self.k * self.k)

    @property
    def process_cov(self):
        return build_process_cov(self.k, self.s_diag, self.s_nb)


@dataclass(frozen=True)
class GroundTruth:
    """Latent trajectory: ``psi[t]`` (vectorized logit), ``theta[t]`` (k x k) and classes."""

    psi: np.ndarray = field(repr=False)
    theta: np.ndarray = field(repr=False)
    assignments: list = field(repr=False)

    @property
    def T(self):
        return len(self.assignments)


def initial_labels(n_nodes, k):
    """Near-equal contiguous split; the remainder goes to the low-index classes."""
    sizes = np.full(k, n_nodes // k)
    sizes[: n_nodes % k] += 1
    return np.repeat(np.arange(k), sizes)


def _symmetrize(psi, k):
    # undirected graphs carry one probability per unordered class pair
    P = unvec(psi)
    upper = np.triu(P)
    return vec(upper + np.triu(upper, 1).swapaxes(-1, -2))


def _churn(labels, params, rng):
    k, n = params.k, params.n_nodes
    while True:
        moved = rng.random(n) < params.churn_fraction
        new = labels.copy()
        # uniform over the k - 1 other classes
        offset = rng.integers(1, k, size=n) if k > 1 else np.zeros(n, dtype=np.int64)
        new[moved] = (labels[moved] + offset[moved]) % k
        if np.all(np.bincount(new, minlength=k) >= params.min_class_size):
            return new


def generate(params: SimParams):
    """Draw a snapshot sequence and its ground truth.

    Draw order from a single generator seeded by ``params.seed``: the whole
    state walk, then class churn for every step, then the edges of each step.

    Returns
    -------
    snapshots : list of Snapshot
    truth : GroundTruth
    """
    rng = np.random.default_rng(params.seed)
    k, n, T = params.k, params.n_nodes, params.T
    d = k * k
    gamma = params.process_cov

    psi0 = rng.multivariate_normal(params.init_mean, params.init_cov, method="cholesky")
    steps = rng.multivariate_normal(np.zeros(d), gamma, size=T, method="eigh")
    psi = psi0 + np.cumsum(steps, axis=0)
    if not params.directed:
        psi = _symmetrize(psi, k)

    labels = [initial_labels(n, k)]
    if k > 1 and params.churn_fraction > 0:
        for _ in range(1, T):
            labels.append(_churn(labels[-1], params, rng))
    else:
        labels.extend(labels[0].copy() for _ in range(1, T))

    snapshots = []
    theta = unvec(logistic_vec(psi))
    for t in range(T):
        c = labels[t]
        P = theta[t][c[:, None], c[None, :]]
        if params.directed:
            A = rng.random((n, n)) < P
            np.fill_diagonal(A, False)
        else:
            iu = np.triu_indices(n, 1)
            draws = rng.random(len(iu[0])) < P[iu]
            A = np.zeros((n, n), dtype=bool)
            A[iu[0][draws], iu[1][draws]] = True
            A |= A.T
        edges = np.argwhere(A)
        snapshots.append(Snapshot(t=t + 1, n_nodes=n, edges=edges, directed=params.directed))

    truth = GroundTruth(psi=psi, theta=theta, assignments=[ClassAssignment(c, k) for c in labels])
    return snapshots, truth
