"""Static and temporal contact networks.

Both network types are immutable once built. Node ids are dense integers in
``[0, node_count)``; the original labels read from a file are kept in
``labels`` so results can be reported back in the caller's ids.
"""
from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class NetworkFormatError(ValueError):
    """Raised when a network file cannot be parsed or violates an invariant."""


class _Labelled:
    labels: tuple[str, ...]

    def index_of(self, label) -> int:
        """Dense id of an original node label."""
        cache = self.__dict__.get("_label_cache")
        if cache is None:
            cache = {lab: i for i, lab in enumerate(self.labels)}
            object.__setattr__(self, "_label_cache", cache)
        try:
            return cache[str(label)]
        except KeyError:
            raise KeyError(f"unknown node label {label!r}") from None


@dataclass(frozen=True, eq=False)
class StaticNetwork(_Labelled):
    """Undirected, unweighted simple graph stored in CSR form."""

    node_count: int
    indptr: np.ndarray
    indices: np.ndarray
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.node_count < 1:
            raise ValueError("node_count must be positive")
        if not self.labels:
            object.__setattr__(self, "labels", tuple(str(i) for i in range(self.node_count)))
        self.indptr.setflags(write=False)
        self.indices.setflags(write=False)

    @classmethod
    def from_edges(cls, node_count: int, edges: Iterable[tuple[int, int]],
                   labels: Sequence[str] = ()) -> "StaticNetwork":
        pairs = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if u == v:
                raise ValueError(f"self-loop on node {u}")
            if not (0 <= u < node_count and 0 <= v < node_count):
                raise ValueError(f"edge ({u}, {v}) out of range for {node_count} nodes")
            pairs.add((min(u, v), max(u, v)))
        degree = np.zeros(node_count, dtype=np.int64)
        for u, v in pairs:
            degree[u] += 1
            degree[v] += 1
        indptr = np.zeros(node_count + 1, dtype=np.int64)
        np.cumsum(degree, out=indptr[1:])
        indices = np.empty(indptr[-1], dtype=np.int64)
        fill = indptr[:-1].copy()
        for u, v in sorted(pairs):
            indices[fill[u]] = v
            fill[u] += 1
            indices[fill[v]] = u
            fill[v] += 1
        for i in range(node_count):
            indices[indptr[i]:indptr[i + 1]].sort()
        return cls(node_count, indptr, indices, tuple(labels))

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    def degree(self, u: int) -> int:
        return int(self.indptr[u + 1] - self.indptr[u])

    @property
    def edge_count(self) -> int:
        return len(self.indices) // 2

    def edges(self) -> list[tuple[int, int]]:
        return [(u, int(v)) for u in range(self.node_count)
                for v in self.neighbors(u) if u < v]


@dataclass(frozen=True, eq=False)
class TemporalNetwork(_Labelled):
    """Time-ordered contact events ``(u, v, t)`` with integer-day stamps."""

    node_count: int
    src: np.ndarray
    dst: np.ndarray
    times: np.ndarray
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not (len(self.src) == len(self.dst) == len(self.times)):
            raise ValueError("event arrays must have equal length")
        if len(self.times) == 0:
            raise ValueError("temporal network has no events")
        if np.any(self.src == self.dst):
            raise ValueError("event with identical endpoints")
        if np.any(np.diff(self.times) < 0):
            raise ValueError("events must be sorted by time")
        if not self.labels:
            object.__setattr__(self, "labels", tuple(str(i) for i in range(self.node_count)))
        for arr in (self.src, self.dst, self.times):
            arr.setflags(write=False)

    @classmethod
    def from_events(cls, node_count: int, events: Iterable[tuple[int, int, int]],
                    labels: Sequence[str] = ()) -> "TemporalNetwork":
        ev = np.asarray(list(events), dtype=np.int64).reshape(-1, 3)
        order = np.argsort(ev[:, 2], kind="stable")
        ev = ev[order]
        return cls(node_count, ev[:, 0].copy(), ev[:, 1].copy(), ev[:, 2].copy(),
                   tuple(labels))

    @property
    def t_min(self) -> int:
        return int(self.times[0])

    @property
    def t_max(self) -> int:
        return int(self.times[-1])

    def __len__(self):
        return len(self.times)

    def events(self) -> list[tuple[int, int, int]]:
        return list(zip(self.src.tolist(), self.dst.tolist(), self.times.tolist()))

    def aggregate(self) -> StaticNetwork:
        """Collapse all events to an undirected static graph."""
        return StaticNetwork.from_edges(self.node_count, zip(self.src, self.dst), self.labels)

    def active_nodes(self, t_from: int, t_to: int) -> np.ndarray:
        """Nodes with at least one contact in ``[t_from, t_to]``."""
        lo = np.searchsorted(self.times, t_from, side="left")
        hi = np.searchsorted(self.times, t_to, side="right")
        return np.unique(np.concatenate([self.src[lo:hi], self.dst[lo:hi]]))


def _data_lines(path):
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line.split()


def _dense_labels(raw_labels: Iterable[str]) -> list[str]:
    uniq = set(raw_labels)
    try:
        return sorted(uniq, key=int)
    except ValueError:
        return sorted(uniq)


def write_id_map(labels: Sequence[str], path) -> None:
    """Write the ``original_id,dense_id`` sidecar."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["original_id", "dense_id"])
        for i, lab in enumerate(labels):
            w.writerow([lab, i])


def load_static(path, id_map_path=None) -> StaticNetwork:
    """Read a whitespace-separated ``u v`` edge list.

    Duplicate edges are dropped silently; self-loops are an error. Labels
    are remapped to dense ids (numeric order when every label is an
    integer) and the map is written to ``id_map_path`` if given.
    """
    raw = []
    for lineno, parts in _data_lines(path):
        if len(parts) < 2:
            raise NetworkFormatError(f"{path}: line {lineno}: expected 'u v'")
        u, v = parts[0], parts[1]
        if u == v:
            raise NetworkFormatError(f"{path}: self-loop at line {lineno}")
        raw.append((u, v))
    if not raw:
        raise NetworkFormatError(f"{path}: no edges")
    labels = _dense_labels(x for e in raw for x in e)
    index = {lab: i for i, lab in enumerate(labels)}
    g = StaticNetwork.from_edges(len(labels), ((index[u], index[v]) for u, v in raw), labels)
    if id_map_path is not None:
        write_id_map(labels, id_map_path)
    return g


def load_temporal(path, discard_before: int = 0, id_map_path=None) -> TemporalNetwork:
    """Read ``u v t`` contact triplets.

    Events before ``discard_before`` are dropped and the remaining stamps are
    shifted so that ``discard_before`` becomes day 0.
    """
    if discard_before < 0:
        raise ValueError("discard_before must be >= 0")
    raw = []
    for lineno, parts in _data_lines(path):
        if len(parts) < 3:
            raise NetworkFormatError(f"{path}: line {lineno}: expected 'u v t'")
        u, v, t = parts[:3]
        try:
            t = int(t)
        except ValueError:
            raise NetworkFormatError(f"{path}: line {lineno}: bad timestamp {t!r}") from None
        if u == v:
            raise NetworkFormatError(f"{path}: self-loop at line {lineno}")
        if t >= discard_before:
            raw.append((u, v, t - discard_before))
    if not raw:
        raise NetworkFormatError(f"{path}: no events at or after day {discard_before}")
    labels = _dense_labels(x for e in raw for x in e[:2])
    index = {lab: i for i, lab in enumerate(labels)}
    tn = TemporalNetwork.from_events(len(labels), ((index[u], index[v], t) for u, v, t in raw),
                                     labels)
    if id_map_path is not None:
        write_id_map(labels, id_map_path)
    return tn


def make_lattice(rows: int, cols: int) -> StaticNetwork:
    """4-connected grid without periodic boundary; node (r, c) is ``r*cols + c``."""
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    edges = []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                edges.append((i, i + 1))
            if r + 1 < rows:
                edges.append((i, i + cols))
    return StaticNetwork.from_edges(rows * cols, edges)


def bfs_distances(g: StaticNetwork, source: int) -> np.ndarray:
    """Hop distance from ``source`` to every node; -1 marks unreachable."""
    dist = np.full(g.node_count, -1, dtype=np.int64)
    dist[source] = 0
    queue = deque([source])
    indptr, indices = g.indptr, g.indices
    while queue:
        u = queue.popleft()
        du = dist[u] + 1
        for v in indices[indptr[u]:indptr[u + 1]]:
            if dist[v] < 0:
                dist[v] = du
                queue.append(v)
    return dist


def graph_distance(g: StaticNetwork, u: int, v: int) -> int | None:
    """Shortest-path length between ``u`` and ``v``, or ``None`` if unreachable."""
    for node in (u, v):
        if not 0 <= node < g.node_count:
            raise IndexError(f"node {node} out of range")
    if u == v:
        return 0
    d = int(bfs_distances(g, u)[v])
    return None if d < 0 else d


def randomize_bins(tn: TemporalNetwork, delta: int, seed) -> TemporalNetwork:
    """Shuffle timestamps among the events of each ``delta``-day bin.

    Bins are ``[t_min + k*delta, t_min + (k+1)*delta)``; the last one may be
    short. Endpoints stay attached to their event; only the stamps move.
    """
    if delta < 1:
        raise ValueError("delta must be >= 1")
    rng = np.random.default_rng(seed)
    times = tn.times.copy()
    bins = (times - tn.t_min) // delta
    bounds = np.flatnonzero(np.diff(bins)) + 1
    for lo, hi in zip(np.r_[0, bounds], np.r_[bounds, len(times)]):
        if hi - lo > 1:
            times[lo:hi] = rng.permutation(times[lo:hi])
    order = np.argsort(times, kind="stable")
    return TemporalNetwork(tn.node_count, tn.src[order].copy(), tn.dst[order].copy(),
                           times[order], tn.labels)


def make_synthetic_temporal(side: int = 20, days: int = 320, contact_rate: float = 0.15,
                            activity_shape: float = 4.0, seed=0) -> TemporalNetwork:
    """Spatial contact sequence used when no empirical data is at hand.

    ``side * side`` nodes sit on a torus grid. Every day each node initiates
    one contact with probability equal to its activity, a Pareto draw with
    shape ``activity_shape`` rescaled to mean ``contact_rate``, with one of
    its four grid neighbours picked uniformly. Stamps run from day 0 to
    ``days - 1``; node ``(r, c)`` has id ``r * side + c``.
    """
    if side < 2 or days < 1:
        raise ValueError("need side >= 2 and days >= 1")
    rng = np.random.default_rng(seed)
    n = side * side
    r, c = np.divmod(np.arange(n), side)
    nbrs = np.stack([r * side + (c + 1) % side, r * side + (c - 1) % side,
                     ((r + 1) % side) * side + c, ((r - 1) % side) * side + c], axis=1)
    activity = rng.pareto(activity_shape, size=n) + 1.0
    activity = np.minimum(activity * (contact_rate / activity.mean()), 1.0)
    src, dst, times = [], [], []
    for t in range(days):
        u = np.flatnonzero(rng.random(n) < activity)
        src.append(u)
        dst.append(nbrs[u, rng.integers(4, size=len(u))])
        times.append(np.full(len(u), t))
    src, dst, times = (np.concatenate(x) for x in (src, dst, times))
    return TemporalNetwork.from_events(n, list(zip(src.tolist(), dst.tolist(), times.tolist())))
