"""Plain-text formats: snapshot and membership TSVs, estimate CSVs, JSON reports."""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

import numpy as np

from .ekf import logistic_vec
from .exceptions import DimensionError, ParseError
from .netcore import ClassAssignment, Snapshot

__all__ = [
    "NodeIndex",
    "read_snapshots",
    "write_snapshots",
    "read_memberships",
    "write_memberships",
    "write_estimates",
    "read_estimates",
    "estimate_records",
    "write_assignments",
    "read_assignments",
    "write_json",
    "read_json",
]

log = logging.getLogger(__name__)

ESTIMATE_HEADER = ["t", "a", "b", "theta_hat", "ci_low", "ci_high", "var_logit"]
Z95 = 1.959963984540054


class NodeIndex:
    """First-appearance map from external node labels to dense 0-based ids."""

    def __init__(self, labels=()):
        self.ids = {}
        for lab in labels:
            self.add(lab)

    def add(self, label):
        label = str(label)
        if label not in self.ids:
            self.ids[label] = len(self.ids)
        return self.ids[label]

    def __getitem__(self, label):
        return self.ids[str(label)]

    def __contains__(self, label):
        return str(label) in self.ids

    def __len__(self):
        return len(self.ids)

    @property
    def labels(self):
        return list(self.ids)

    def write(self, path):
        with open(path, "w") as fh:
            fh.write("# id\tlabel\n")
            for lab, i in self.ids.items():
                fh.write(f"{i}\t{lab}\n")

    @classmethod
    def read(cls, path):
        out = cls()
        for lineno, fields in _rows(path, 2):
            if int(fields[0]) != len(out):
                raise ParseError(f"node ids must be listed densely in order, got {fields[0]}", lineno)
            out.add(fields[1])
        return out


def _rows(path, width):
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != width:
                raise ParseError(f"expected {width} tab-separated fields, got {len(fields)}", lineno)
            yield lineno, fields


def _int(text, lineno, name):
    try:
        return int(text)
    except ValueError:
        raise ParseError(f"{name} is not an integer: {text!r}", lineno) from None


def read_snapshots(path, directed=True, nodes=None):
    """Parse a ``t<TAB>src<TAB>dst`` edge list.

    Node labels are mapped to ids in order of first appearance, unless an
    existing :class:`NodeIndex` is passed. Time indices are compacted to start
    at 1; missing steps inside the range become empty snapshots with a
    warning. Undirected input is closed under reversal.

    Returns
    -------
    snapshots : list of Snapshot
    nodes : NodeIndex
    """
    nodes = NodeIndex() if nodes is None else nodes
    by_t = {}
    for lineno, fields in _rows(path, 3):
        t = _int(fields[0], lineno, "time index")
        src, dst = fields[1], fields[2]
        _int(src, lineno, "source node")
        _int(dst, lineno, "target node")
        if src == dst:
            raise ValueError(f"line {lineno}: self-edge {src} -> {dst} is not allowed")
        by_t.setdefault(t, []).append((nodes.add(src), nodes.add(dst)))
    if not by_t:
        raise ParseError("no edges found", 0)
    t0, t1 = min(by_t), max(by_t)
    missing = [t for t in range(t0, t1 + 1) if t not in by_t]
    if missing:
        log.warning("time steps %s have no edges; inserting empty snapshots", missing)
    n = len(nodes)
    snapshots = []
    for t in range(t0, t1 + 1):
        e = np.array(by_t.get(t, []), dtype=np.int64).reshape(-1, 2)
        if not directed:
            e = np.vstack([e, e[:, ::-1]])
        snapshots.append(Snapshot(t=t - t0 + 1, n_nodes=n, edges=e, directed=directed))
    return snapshots, nodes


def write_snapshots(path, snapshots, nodes=None):
    """Write snapshots as ``t<TAB>src<TAB>dst``; undirected edges once per pair."""
    labels = nodes.labels if nodes is not None else None
    with open(path, "w") as fh:
        for s in snapshots:
            e = s.edges if s.directed else s.edges[s.edges[:, 0] < s.edges[:, 1]]
            for i, j in e:
                a, b = (labels[i], labels[j]) if labels else (i, j)
                fh.write(f"{s.t}\t{a}\t{b}\n")


def read_memberships(path, nodes, T=None):
    """Parse ``node<TAB>class`` (fixed) or ``t<TAB>node<TAB>class`` (per step).

    Class labels are arbitrary integers, mapped to ``0 .. k-1`` in sorted
    order. Every node in ``nodes`` must be assigned at every step.

    Returns
    -------
    list of ClassAssignment, one per step (length ``T`` for fixed memberships)
    """
    rows = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t")
            if width is None:
                width = len(fields)
                if width not in (2, 3):
                    raise ParseError("memberships need 2 or 3 tab-separated fields", lineno)
            elif len(fields) != width:
                raise ParseError(f"expected {width} fields, got {len(fields)}", lineno)
            rows.append((lineno, fields))
    if not rows:
        raise ParseError("no memberships found", 0)
    classes = sorted({_int(f[-1], ln, "class") for ln, f in rows})
    cls_id = {c: i for i, c in enumerate(classes)}
    k = len(classes)

    per_t = {}
    for lineno, f in rows:
        t = _int(f[0], lineno, "time index") if width == 3 else 0
        node = f[-2]
        if node not in nodes:
            log.warning("line %d: node %s does not appear in the snapshots", lineno, node)
            continue
        per_t.setdefault(t, {})[nodes[node]] = cls_id[int(f[-1])]

    def build(mapping, t):
        missing = sorted(set(range(len(nodes))) - set(mapping))
        if missing:
            raise DimensionError(f"step {t}: {len(missing)} nodes have no class, e.g. {nodes.labels[missing[0]]}")
        return ClassAssignment(np.array([mapping[i] for i in range(len(nodes))]), k)

    if width == 2:
        a = build(per_t[0], 1)
        return [a] * (T or 1)
    steps = sorted(per_t)
    t0 = steps[0]
    if steps != list(range(t0, t0 + len(steps))):
        raise ParseError("membership time steps must be contiguous", 0)
    out = [build(per_t[t], t) for t in steps]
    if T is not None and len(out) != T:
        raise DimensionError(f"memberships cover {len(out)} steps, snapshots {T}")
    return out


def write_memberships(path, assignments, nodes=None):
    """Write ``t<TAB>node<TAB>class`` with 1-based classes."""
    labels = nodes.labels if nodes is not None else None
    with open(path, "w") as fh:
        for t, a in enumerate(assignments, start=1):
            for i, c in enumerate(a.labels):
                fh.write(f"{t}\t{labels[i] if labels else i}\t{int(c) + 1}\n")


def estimate_records(states):
    """Rows ``(t, a, b, theta_hat, ci_low, ci_high, var_logit)`` with 1-based classes.

    The 95% interval is computed on the logit scale and mapped through the
    logistic function.
    """
    rows = []
    for t, s in enumerate(states, start=1):
        k = s.k
        var = np.clip(np.diag(s.cov), 0.0, None)
        half = Z95 * np.sqrt(var)
        theta = logistic_vec(s.mean)
        lo, hi = logistic_vec(s.mean - half), logistic_vec(s.mean + half)
        for b in range(k):
            for a in range(k):
                i = b * k + a
                rows.append((t, a + 1, b + 1, theta[i], lo[i], hi[i], var[i]))
    return rows


def write_estimates(path, states):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ESTIMATE_HEADER)
        for t, a, b, *vals in estimate_records(states):
            w.writerow([t, a, b, *(f"{v:.10g}" for v in vals)])


def read_estimates(path):
    """Read an estimates CSV into ``{"t", "a", "b", ...}`` arrays."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ESTIMATE_HEADER:
            raise ParseError(f"unexpected header {header}", 1)
        rows = list(reader)
    cols = list(zip(*rows)) if rows else [()] * len(ESTIMATE_HEADER)
    out = {}
    for name, col in zip(ESTIMATE_HEADER, cols):
        dtype = np.int64 if name in ("t", "a", "b") else float
        out[name] = np.array(col, dtype=dtype)
    return out


def write_assignments(path, assignments, nodes=None):
    """Per-step classes as CSV ``t,node,class`` (1-based classes)."""
    labels = nodes.labels if nodes is not None else None
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "node", "class"])
        for t, a in enumerate(assignments, start=1):
            for i, c in enumerate(a.labels):
                w.writerow([t, labels[i] if labels else i, int(c) + 1])


def read_assignments(path, nodes=None, k=None):
    """Read a ``t,node,class`` CSV back into one :class:`ClassAssignment` per step.

    Node labels are resolved through ``nodes`` when given, else read as ids.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["t", "node", "class"]:
            raise ParseError(f"unexpected header {header}", 1)
        rows = [(int(t), node, int(c) - 1) for t, node, c in reader]
    k = k or max(c for _, _, c in rows) + 1
    per_t = {}
    for t, node, c in rows:
        i = nodes[node] if nodes is not None else int(node)
        per_t.setdefault(t, {})[i] = c
    out = []
    for t in sorted(per_t):
        m = per_t[t]
        out.append(ClassAssignment(np.array([m[i] for i in range(len(m))]), k))
    return out


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_plain(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)
