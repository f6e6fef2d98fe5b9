"""Stochastic spreading simulators on static and temporal networks.

Randomness is organised so that results never depend on how work is split
across processes: the ``n`` runs for one source are cut into fixed-size
chunks (the size depends only on the network size) and chunk ``k`` draws
from a Philox generator keyed by ``(seed, *stream, source, k)``.
"""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from functools import partial
from typing import Iterator

import numpy as np

from . import _kernels
from ._parallel import pmap
from .network import StaticNetwork, TemporalNetwork

MODELS = ("SIR", "SI", "IC")

# w_a(x) < 1e-12  <=>  (1 - x) > a * sqrt(-ln 1e-12)
_NEGLIGIBLE = float(np.sqrt(-np.log(1e-12)))


@dataclass(frozen=True)
class SpreadingParams:
    """Discrete-time model on a static network.

    ``SI`` pins ``q`` to 0 and ``IC`` pins it to 1 whatever is passed.
    """

    model: str = "SIR"
    p: float = 0.5
    q: float = 0.5
    T: int = 5

    def __post_init__(self):
        model = self.model.upper()
        if model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; expected one of {MODELS}")
        object.__setattr__(self, "model", model)
        if model == "SI":
            object.__setattr__(self, "q", 0.0)
        elif model == "IC":
            object.__setattr__(self, "q", 1.0)
        _check_prob("p", self.p)
        _check_prob("q", self.q)
        if int(self.T) != self.T or self.T < 1:
            raise ValueError("T must be a positive integer")


@dataclass(frozen=True)
class TemporalParams:
    """SIR on a contact sequence: per-contact ``p``, per-day ``q``."""

    p: float = 0.3
    q: float = 0.01
    t0: int = 0
    t_end: int = 300

    def __post_init__(self):
        _check_prob("p", self.p)
        _check_prob("q", self.q)
        if self.t0 > self.t_end:
            raise ValueError("t0 must be <= t_end")


def _check_prob(name, value):
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class Snapshot:
    """Observed ever-infected set, optionally with the set of observed nodes."""

    ever_infected: frozenset
    observed_mask: frozenset | None = None

    def __post_init__(self):
        object.__setattr__(self, "ever_infected", frozenset(int(v) for v in self.ever_infected))
        if self.observed_mask is not None:
            mask = frozenset(int(v) for v in self.observed_mask)
            if not mask:
                raise ValueError("observed_mask must be non-empty")
            if not self.ever_infected <= mask:
                raise ValueError("ever_infected must be a subset of observed_mask")
            object.__setattr__(self, "observed_mask", mask)

    def __len__(self):
        return len(self.ever_infected)

    def masks(self, node_count: int) -> tuple[np.ndarray, np.ndarray]:
        """0/1 arrays ``(target, observed)`` over all nodes."""
        target = np.zeros(node_count, dtype=np.uint8)
        target[list(self.ever_infected)] = 1
        if self.observed_mask is None:
            observed = np.ones(node_count, dtype=np.uint8)
        else:
            observed = np.zeros(node_count, dtype=np.uint8)
            observed[list(self.observed_mask)] = 1
        return target, observed


def observe_subset(ever_infected, node_count: int, fraction: float, seed) -> Snapshot:
    """Snapshot in which only a random ``fraction`` of node states is known."""
    rng = np.random.default_rng(seed)
    k = max(1, int(round(fraction * node_count)))
    mask = frozenset(rng.choice(node_count, size=k, replace=False).tolist())
    return Snapshot(frozenset(ever_infected) & mask, mask)


def read_snapshot(path, net=None, observed_path=None) -> Snapshot:
    """Read a snapshot file (one node label per line, '#' comments).

    Labels are mapped through ``net.index_of`` when a network is given.
    """
    def _read(p):
        out = []
        with open(p) as fh:
            for raw in fh:
                line = raw.split("#", 1)[0].strip()
                if line:
                    out.append(net.index_of(line) if net is not None else int(line))
        return frozenset(out)

    mask = _read(observed_path) if observed_path else None
    return Snapshot(_read(path), mask)


def write_snapshot(snapshot: Snapshot, path, labels=None, observed_path=None) -> None:
    def _write(nodes, p):
        with open(p, "w") as fh:
            for v in sorted(nodes):
                fh.write(f"{labels[v] if labels is not None else v}\n")

    _write(snapshot.ever_infected, path)
    if observed_path is not None and snapshot.observed_mask is not None:
        _write(snapshot.observed_mask, observed_path)


@dataclass(frozen=True)
class SimOutcome:
    ever_infected: frozenset
    pruned: bool = False


@dataclass(frozen=True)
class PQPrior:
    """Finite prior over ``(p, q)`` pairs."""

    points: tuple
    weights: tuple

    def __post_init__(self):
        pts = tuple((float(p), float(q)) for p, q in self.points)
        w = tuple(float(x) for x in self.weights)
        if not pts or len(pts) != len(w):
            raise ValueError("prior needs one weight per (p, q) point")
        if any(x < 0 for x in w) or abs(sum(w) - 1.0) > 1e-9:
            raise ValueError("prior weights must be non-negative and sum to 1")
        for p, q in pts:
            _check_prob("p", p)
            _check_prob("q", q)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    def draw(self, rng, size):
        idx = rng.choice(len(self.points), size=size, p=np.asarray(self.weights))
        arr = np.asarray(self.points)[idx]
        return arr[:, 0].copy(), arr[:, 1].copy()


def chunk_size(node_count: int) -> int:
    return int(min(65536, max(256, (1 << 22) // node_count)))


def chunk_rng(seed, stream, source, k) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in (*stream, source, k)))
    return np.random.Generator(np.random.Philox(ss))


class _Simulator:
    """Shared chunked driver; subclasses provide ``node_count`` and ``_run``."""

    node_count: int
    pq_prior: PQPrior | None

    def _pq(self, rng, size, p, q):
        if self.pq_prior is not None:
            return self.pq_prior.draw(rng, size)
        return np.full(size, float(p)), np.full(size, float(q))

    def run_chunk(self, source, size, rng, target=None, observed=None, prune=False,
                  early_exit_width=None):
        """Run ``size`` simulations from ``source``; returns ``(ever, pruned)``."""
        if not 0 <= source < self.node_count:
            raise IndexError(f"source {source} out of range")
        if target is None:
            target = np.zeros(self.node_count, dtype=np.uint8)
            prune = False
            early_exit_width = None
        if observed is None:
            observed = np.ones(self.node_count, dtype=np.uint8)
        cut = early_exit_width * _NEGLIGIBLE if early_exit_width else 0.0
        ever = np.zeros((size, self.node_count), dtype=np.bool_)
        pruned = np.zeros(size, dtype=np.bool_)
        self._run(int(source), rng, target, observed, bool(prune), float(cut), ever, pruned)
        return ever, pruned

    def chunks(self, source, n, seed, stream=(), snapshot: Snapshot | None = None,
               prune=False, early_exit_width=None) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        """Yield ``(ever, pruned)`` chunk by chunk for ``n`` runs from ``source``."""
        if n < 1:
            raise ValueError("n must be >= 1")
        target = observed = None
        if snapshot is not None:
            target, observed = snapshot.masks(self.node_count)
        size = chunk_size(self.node_count)
        for k, lo in enumerate(range(0, n, size)):
            rng = chunk_rng(seed, stream, source, k)
            yield self.run_chunk(source, min(size, n - lo), rng, target, observed,
                                 prune, early_exit_width)


class StaticSimulator(_Simulator):
    def __init__(self, g: StaticNetwork, params: SpreadingParams, pq_prior: PQPrior | None = None):
        self.g = g
        self.params = params
        self.pq_prior = pq_prior
        self.node_count = g.node_count

    def with_pq_prior(self, prior: PQPrior) -> "StaticSimulator":
        return StaticSimulator(self.g, self.params, prior)

    def _run(self, source, rng, target, observed, prune, cut, ever, pruned):
        prm = self.params
        p, q = self._pq(rng, len(pruned), prm.p, prm.q)
        if prm.model == "IC":
            _kernels.ic_static(self.g.indptr, self.g.indices, source, prm.T, p, rng,
                               target, observed, prune, cut, ever, pruned)
        else:
            if prm.model == "SI":
                q[:] = 0.0
            _kernels.sir_static(self.g.indptr, self.g.indices, source, prm.T, p, q, rng,
                                target, observed, prune, cut, ever, pruned)


class TemporalSimulator(_Simulator):
    """SIR on a temporal network, optionally with a uniform window for the start day."""

    def __init__(self, tn: TemporalNetwork, params: TemporalParams,
                 t0_window: tuple[int, int] | None = None, pq_prior: PQPrior | None = None):
        if t0_window is not None:
            lo, hi = int(t0_window[0]), int(t0_window[1])
            if lo > hi:
                raise ValueError("empty t0 window")
            t0_window = (lo, hi)
        self.tn = tn
        self.params = params
        self.t0_window = t0_window
        self.pq_prior = pq_prior
        self.node_count = tn.node_count

    def with_t0_window(self, window) -> "TemporalSimulator":
        return TemporalSimulator(self.tn, self.params, window, self.pq_prior)

    def with_pq_prior(self, prior: PQPrior) -> "TemporalSimulator":
        return TemporalSimulator(self.tn, self.params, self.t0_window, prior)

    def _run(self, source, rng, target, observed, prune, cut, ever, pruned):
        prm = self.params
        size = len(pruned)
        if self.t0_window is None:
            t0 = np.full(size, prm.t0, dtype=np.int64)
        else:
            t0 = rng.integers(self.t0_window[0], self.t0_window[1] + 1, size=size)
        p, q = self._pq(rng, size, prm.p, prm.q)
        tn = self.tn
        _kernels.sir_temporal(tn.times, tn.src, tn.dst, source, t0, prm.t_end, p, q, rng,
                              target, observed, prune, cut, ever, pruned)


def make_simulator(net, params, **kw) -> _Simulator:
    if isinstance(net, StaticNetwork):
        return StaticSimulator(net, params, **kw)
    if isinstance(net, TemporalNetwork):
        return TemporalSimulator(net, params, **kw)
    raise TypeError(f"unsupported network type {type(net).__name__}")


@dataclass(frozen=True)
class BatchResult(Sequence):
    """``n`` outcomes backed by a boolean ``(n, node_count)`` matrix."""

    ever: np.ndarray
    pruned: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.pruned)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        return SimOutcome(frozenset(np.flatnonzero(self.ever[i]).tolist()), bool(self.pruned[i]))


def _batch_chunk(sim, source, seed, target, observed, prune, job):
    k, size = job
    return sim.run_chunk(source, size, chunk_rng(seed, (), source, k), target, observed, prune)


def batch_simulate(net, params, source: int, n: int, seed, prune_target: Snapshot | None = None,
                   jobs: int = 1) -> BatchResult:
    """``n`` independent runs from ``source``; identical for any ``jobs``."""
    sim = make_simulator(net, params)
    if n < 1:
        raise ValueError("n must be >= 1")
    target = observed = None
    if prune_target is not None:
        target, observed = prune_target.masks(sim.node_count)
    size = chunk_size(sim.node_count)
    work = [(k, min(size, n - lo)) for k, lo in enumerate(range(0, n, size))]
    fn = partial(_batch_chunk, sim, int(source), seed, target, observed, prune_target is not None)
    parts = pmap(fn, work, jobs)
    return BatchResult(np.concatenate([e for e, _ in parts]), np.concatenate([p for _, p in parts]))


def simulate_static(g: StaticNetwork, params: SpreadingParams, source: int, seed,
                    prune_target: Snapshot | None = None) -> SimOutcome:
    return batch_simulate(g, params, source, 1, seed, prune_target)[0]


def simulate_temporal(tn: TemporalNetwork, params: TemporalParams, source: int, seed,
                      prune_target: Snapshot | None = None) -> SimOutcome:
    return batch_simulate(tn, params, source, 1, seed, prune_target)[0]
