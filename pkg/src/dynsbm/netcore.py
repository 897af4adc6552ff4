"""Graph snapshots, class assignments and block sufficient statistics.

Block matrices are k x k arrays indexed ``[a, b]`` (row = source class,
column = target class). Whenever a block matrix is flattened into a state
vector it is stacked column by column, so cell ``(a, b)`` lands at position
``b * k + a``. :func:`vec` and :func:`unvec` are the only places that encode
this map.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .exceptions import DegenerateBlockError, DimensionError, InvalidAssignmentError

__all__ = [
    "Snapshot",
    "ClassAssignment",
    "BlockStats",
    "vec",
    "unvec",
    "cell_index",
    "block_counts",
    "possible_edges",
    "clamp_density",
]


def vec(X):
    """Stack the columns of ``X`` (or of each matrix in a batch ``(..., k, k)``)."""
    X = np.asarray(X)
    k = X.shape[-1]
    return np.swapaxes(X, -1, -2).reshape(X.shape[:-2] + (k * k,))


def unvec(x):
    """Inverse of :func:`vec`."""
    x = np.asarray(x)
    k = int(round(np.sqrt(x.shape[-1])))
    if k * k != x.shape[-1]:
        raise DimensionError(f"length {x.shape[-1]} is not a perfect square")
    return np.swapaxes(x.reshape(x.shape[:-1] + (k, k)), -1, -2)


def cell_index(a, b, k):
    """Position of block cell ``(a, b)`` in a vectorized k x k matrix (0-based)."""
    return b * k + a


def _freeze(arr):
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Snapshot:
    """Directed adjacency structure of one time step.

    Parameters
    ----------
    t : int
        1-based time index.
    n_nodes : int
        Number of nodes; ids are ``0 .. n_nodes - 1``.
    edges : array-like of shape (E, 2)
        Ordered pairs ``(i, j)``. Duplicates are dropped.
    directed : bool
        If False the edge set must be closed under reversal.
    """

    t: int
    n_nodes: int
    edges: np.ndarray = field(repr=False)
    directed: bool = True

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if len(e):
            if e.min() < 0 or e.max() >= self.n_nodes:
                raise ValueError(f"edge endpoint outside [0, {self.n_nodes})")
            if np.any(e[:, 0] == e[:, 1]):
                bad = e[e[:, 0] == e[:, 1]][0]
                raise ValueError(f"self-edge ({bad[0]}, {bad[1]}) is not allowed")
            e = np.unique(e, axis=0)
        object.__setattr__(self, "edges", _freeze(e))
        if not self.directed and len(e):
            codes = e[:, 0] * self.n_nodes + e[:, 1]
            rev = e[:, 1] * self.n_nodes + e[:, 0]
            if not np.all(np.isin(rev, codes)):
                raise ValueError("undirected snapshot is not closed under edge reversal")

    @classmethod
    def from_adjacency(cls, W, t=1, directed=None):
        """Build a snapshot from a dense or sparse 0/1 adjacency matrix.

        The diagonal is ignored. If ``directed`` is None it is inferred from
        the symmetry of ``W``.
        """
        W = sp.coo_matrix(W)
        if W.shape[0] != W.shape[1]:
            raise DimensionError(f"adjacency must be square, got {W.shape}")
        mask = (W.data != 0) & (W.row != W.col)
        edges = np.column_stack([W.row[mask], W.col[mask]])
        if directed is None:
            directed = (W != W.T).nnz > 0
        return cls(t=t, n_nodes=W.shape[0], edges=edges, directed=directed)

    @property
    def n_edges(self):
        return len(self.edges)

    def adjacency(self, sparse=False):
        """Adjacency matrix ``W`` with ``W[i, j] = 1`` iff ``(i, j)`` is an edge."""
        n = self.n_nodes
        data = np.ones(len(self.edges), dtype=np.int64)
        W = sp.csr_matrix((data, (self.edges[:, 0], self.edges[:, 1])), shape=(n, n))
        return W if sparse else W.toarray()

    def reciprocated(self):
        """Undirected copy with every edge's reverse added."""
        e = np.vstack([self.edges, self.edges[:, ::-1]])
        return Snapshot(self.t, self.n_nodes, e, directed=False)


@dataclass(frozen=True)
class ClassAssignment:
    """Node to class map with 0-based class labels in ``[0, k)``."""

    labels: np.ndarray
    k: int

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 1:
            raise InvalidAssignmentError("labels must be one-dimensional")
        if labels.size and not np.issubdtype(labels.dtype, np.integer):
            if not np.all(labels == np.round(labels)):
                raise InvalidAssignmentError("labels must be integers")
        labels = labels.astype(np.int64)
        if self.k < 1:
            raise InvalidAssignmentError(f"k must be >= 1, got {self.k}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.k):
            raise InvalidAssignmentError(f"labels must lie in [0, {self.k})")
        sizes = np.bincount(labels, minlength=self.k)
        if np.any(sizes == 0):
            empty = np.flatnonzero(sizes == 0).tolist()
            raise InvalidAssignmentError(f"empty classes: {empty}")
        object.__setattr__(self, "labels", _freeze(labels))

    @property
    def n_nodes(self):
        return len(self.labels)

    @property
    def sizes(self):
        return np.bincount(self.labels, minlength=self.k)

    def onehot(self):
        Z = np.zeros((self.n_nodes, self.k))
        Z[np.arange(self.n_nodes), self.labels] = 1.0
        return Z


@dataclass(frozen=True)
class BlockStats:
    """Observed (``m``) and possible (``n``) edge counts per block."""

    m: np.ndarray
    n: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=np.int64)
        n = np.asarray(self.n, dtype=np.int64)
        if m.shape != n.shape or m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"m and n must be matching square matrices, got {m.shape}, {n.shape}")
        if np.any(n < 1):
            raise DegenerateBlockError("every block needs at least one possible edge")
        if np.any(m < 0) or np.any(m > n):
            raise ValueError("counts must satisfy 0 <= m <= n")
        object.__setattr__(self, "m", _freeze(m))
        object.__setattr__(self, "n", _freeze(n))

    @property
    def k(self):
        return self.m.shape[0]

    @property
    def y(self):
        """Block densities ``m / n``."""
        return self.m / self.n

    def clamped(self):
        """Densities pushed into the open interval (0, 1)."""
        return clamp_density(self.y, self.n)


def possible_edges(sizes):
    """Possible ordered edges per block for class sizes ``sizes``.

    Works on a batch: ``sizes`` of shape ``(..., k)`` gives ``(..., k, k)``.
    """
    s = np.asarray(sizes, dtype=np.int64)
    n = s[..., :, None] * s[..., None, :]
    idx = np.arange(s.shape[-1])
    n[..., idx, idx] -= s
    return n


def block_counts(snapshot, assignment):
    """Compute :class:`BlockStats` of ``snapshot`` under ``assignment``."""
    if assignment.n_nodes != snapshot.n_nodes:
        raise InvalidAssignmentError(
            f"assignment covers {assignment.n_nodes} nodes, snapshot has {snapshot.n_nodes}"
        )
    k = assignment.k
    sizes = assignment.sizes
    if np.any(sizes < 2):
        lone = np.flatnonzero(sizes < 2).tolist()
        raise DegenerateBlockError(f"classes {lone} have a single member; their self-block is empty")
    m = np.zeros((k, k), dtype=np.int64)
    if snapshot.n_edges:
        lab = assignment.labels
        np.add.at(m, (lab[snapshot.edges[:, 0]], lab[snapshot.edges[:, 1]]), 1)
    return BlockStats(m=m, n=possible_edges(sizes))


def clamp_density(y, n):
    """Clamp densities into ``[1 / (2n), 1 - 1 / (2n)]`` so their logit is finite."""
    y = np.asarray(y, dtype=float)
    lo = 1.0 / (2.0 * np.asarray(n, dtype=float))
    out = np.minimum(np.maximum(y, lo), 1.0 - lo)
    return out if out.ndim else float(out)
