"""Input coercion shared by the estimators."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .exceptions import DimensionError
from .netcore import ClassAssignment, Snapshot


def check_snapshots(X, directed=None):
    """Coerce ``X`` to a list of :class:`Snapshot`.

    Accepts a sequence of snapshots, a ``(T, n, n)`` array, or a sequence of
    dense or sparse ``(n, n)`` adjacency matrices.
    """
    if isinstance(X, Snapshot):
        X = [X]
    if isinstance(X, np.ndarray):
        if X.ndim == 2:
            X = X[None]
        if X.ndim != 3:
            raise DimensionError(f"expected a (T, n, n) array, got shape {X.shape}")
    X = list(X)
    if not X:
        raise ValueError("at least one snapshot is required")
    out = []
    for t, W in enumerate(X, start=1):
        if isinstance(W, Snapshot):
            out.append(W)
        elif sp.issparse(W) or isinstance(W, np.ndarray) or isinstance(W, list):
            W = W if sp.issparse(W) else np.asarray(W)
            out.append(Snapshot.from_adjacency(W, t=t, directed=directed))
        else:
            raise TypeError(f"cannot interpret snapshot of type {type(W).__name__}")
    return out


def check_memberships(memberships, snapshots, k=None):
    """Coerce memberships to one :class:`ClassAssignment` per snapshot.

    Accepts assignments, an ``(n,)`` label vector (fixed classes) or a
    ``(T, n)`` label array. Integer labels must lie in ``[0, k)``.
    """
    T = len(snapshots)
    if isinstance(memberships, ClassAssignment):
        memberships = [memberships] * T
    elif not (isinstance(memberships, (list, tuple)) and memberships and isinstance(memberships[0], ClassAssignment)):
        arr = np.asarray(memberships)
        if arr.ndim == 1:
            arr = np.broadcast_to(arr, (T, arr.size))
        if arr.ndim != 2:
            raise DimensionError(f"memberships must be (n,) or (T, n), got shape {arr.shape}")
        if k is None:
            k = int(arr.max()) + 1
        memberships = [ClassAssignment(np.array(row, dtype=np.int64), k) for row in arr]
    memberships = list(memberships)
    if len(memberships) != T:
        raise DimensionError(f"{len(memberships)} assignments for {T} snapshots")
    for s, a in zip(snapshots, memberships):
        if a.n_nodes != s.n_nodes:
            raise DimensionError(f"step {s.t}: assignment covers {a.n_nodes} nodes, snapshot {s.n_nodes}")
    return memberships
