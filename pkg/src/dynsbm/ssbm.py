"""Static stochastic blockmodel: likelihood, MLE and spectral initialization."""

from __future__ import annotations

import warnings

import numpy as np
from sklearn.cluster import KMeans
from sklearn.utils.extmath import svd_flip

from .exceptions import ConfigurationError
from .netcore import BlockStats, ClassAssignment, clamp_density

__all__ = ["ssbm_loglikelihood", "ssbm_mle", "spectral_embedding", "spectral_init"]


def ssbm_loglikelihood(stats: BlockStats, theta) -> float:
    """Log-likelihood of block counts under edge probabilities ``theta``.

    ``sum_ab m_ab log(theta_ab) + (n_ab - m_ab) log(1 - theta_ab)``
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != stats.m.shape:
        raise ValueError(f"theta shape {theta.shape} does not match stats {stats.m.shape}")
    if np.any(theta <= 0) or np.any(theta >= 1):
        raise ValueError("theta entries must lie strictly inside (0, 1)")
    m, n = stats.m, stats.n
    return float(np.sum(m * np.log(theta) + (n - m) * np.log1p(-theta)))


def ssbm_mle(stats: BlockStats) -> np.ndarray:
    """Block densities, clamped to the interior, as the edge-probability estimate."""
    return clamp_density(stats.y, stats.n)


def spectral_embedding(W, k):
    """Rows of ``[U_k S_k^{1/2}, V_k S_k^{1/2}]`` from the SVD of the adjacency.

    If the adjacency has fewer than ``k`` singular directions the missing
    columns are zero. Singular vector signs are fixed so that the largest
    entry of each left vector is positive, which makes the embedding
    equivariant under node relabeling.
    """
    W = np.asarray(W, dtype=float)
    n = W.shape[0]
    U, s, Vt = np.linalg.svd(W)
    U, Vt = svd_flip(U, Vt)
    r = min(k, len(s))
    root = np.sqrt(s[:r])
    Z = np.zeros((n, 2 * k))
    Z[:, :r] = U[:, :r] * root
    Z[:, k : k + r] = Vt[:r].T * root
    return Z


def _repair_empty(Z, labels, centers, k):
    # Move the point farthest from its own centroid into each empty cluster.
    labels = labels.copy()
    sizes = np.bincount(labels, minlength=k)
    for c in np.flatnonzero(sizes == 0):
        dist = np.sum((Z - centers[labels]) ** 2, axis=1)
        donors = sizes[labels] > 1
        dist[~donors] = -np.inf
        i = int(np.argmax(dist))
        sizes[labels[i]] -= 1
        labels[i] = c
        sizes[c] += 1
        centers[c] = Z[i]
    return labels


def spectral_init(snapshot, k, seed=None, min_size=1) -> ClassAssignment:
    """Cluster nodes by k-means on the scaled singular vectors of the adjacency.

    Parameters
    ----------
    snapshot : Snapshot
    k : int
        Number of classes.
    seed : int or None
        Seed for k-means++ initialization.
    min_size : int
        Smallest allowed class. Classes below it are topped up with the points
        farthest from their centroids.
    """
    n = snapshot.n_nodes
    if k < 1 or k * min_size > n:
        raise ConfigurationError(f"cannot split {n} nodes into {k} classes of size >= {min_size}")
    if k == 1:
        return ClassAssignment(np.zeros(n, dtype=np.int64), 1)
    Z = spectral_embedding(snapshot.adjacency(), k)
    # cluster the rows in a canonical order so the seeded k-means++ draws do
    # not depend on node ids
    order = np.lexsort(np.round(Z, 9).T[::-1])
    Z = Z[order]
    km = KMeans(n_clusters=k, init="k-means++", n_init=10, max_iter=100, random_state=seed)
    with warnings.catch_warnings():
        # duplicate rows (e.g. isolated nodes) trigger a convergence warning
        warnings.simplefilter("ignore")
        labels = km.fit_predict(Z).astype(np.int64)
    centers = km.cluster_centers_.copy()
    labels = _repair_empty(Z, labels, centers, k)
    if min_size > 1:
        labels = _top_up(Z, labels, centers, k, min_size)
    out = np.empty(n, dtype=np.int64)
    out[order] = labels
    return ClassAssignment(out, k)


def _top_up(Z, labels, centers, k, min_size):
    labels = labels.copy()
    sizes = np.bincount(labels, minlength=k)
    for c in range(k):
        while sizes[c] < min_size:
            dist = np.sum((Z - centers[labels]) ** 2, axis=1)
            dist[sizes[labels] <= min_size] = -np.inf
            dist[labels == c] = -np.inf
            i = int(np.argmax(dist))
            sizes[labels[i]] -= 1
            labels[i] = c
            sizes[c] += 1
    return labels
