"""Exact source likelihoods on tiny static networks by exhaustive enumeration.

The synchronous SIR step is expanded literally: every infection attempt
along an S-I edge and every recovery draw is a binary branch. Branches that
lead to the same process state are merged, and sub-trees are memoised on
``(state vector, steps left)``. The result is exact up to float rounding and
shares no code with the Monte-Carlo simulators it is used to check.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass

from .network import StaticNetwork
from .posterior import Posterior
from .spreading import Snapshot, SpreadingParams

S, I, R = 0, 1, 2


class BudgetExceeded(RuntimeError):
    """The instance is too large to enumerate within the configured budget."""


@dataclass(frozen=True)
class EnumerationBudget:
    max_nodes: int = 10
    max_steps: int = 4
    max_branches: int = 10_000_000

    def __post_init__(self):
        if min(self.max_nodes, self.max_steps, self.max_branches) < 1:
            raise ValueError("budget limits must be positive")


class _Enumerator:
    def __init__(self, g, params, budget, allowed=None):
        self.adj = [tuple(int(v) for v in g.neighbors(u)) for u in range(g.node_count)]
        self.p = params.p
        self.q = params.q
        self.budget = budget
        # nodes that may become infected without the branch being discarded
        self.allowed = allowed
        self.branches = 0
        self.memo = {}

    def _tick(self, k=1):
        self.branches += k
        if self.branches > self.budget.max_branches:
            raise BudgetExceeded(f"more than {self.budget.max_branches} branches")

    def _infections(self, state):
        """Distribution over the set of nodes newly infected this step."""
        dist = {frozenset(): 1.0}
        p = self.p
        for u, su in enumerate(state):
            if su != I:
                continue
            for v in self.adj[u]:
                if state[v] != S:
                    continue
                nxt = defaultdict(float)
                for newset, w in dist.items():
                    self._tick(2)
                    if p > 0:
                        nxt[newset | {v}] += w * p
                    if p < 1:
                        nxt[newset] += w * (1 - p)
                dist = nxt
        return dist

    def _recoveries(self, state):
        dist = {frozenset(): 1.0}
        q = self.q
        for u, su in enumerate(state):
            if su != I:
                continue
            nxt = defaultdict(float)
            for recset, w in dist.items():
                self._tick(2)
                if q > 0:
                    nxt[recset | {u}] += w * q
                if q < 1:
                    nxt[recset] += w * (1 - q)
            dist = nxt
        return dist

    def outcomes(self, state: tuple, steps: int) -> dict:
        """Map final ever-infected set -> probability, from ``state`` with ``steps`` left."""
        key = (state, steps)
        if key in self.memo:
            return self.memo[key]
        if steps == 0 or I not in state:
            res = {frozenset(i for i, s in enumerate(state) if s != S): 1.0}
            self.memo[key] = res
            return res
        terms = defaultdict(list)
        infections = self._infections(state)
        recoveries = self._recoveries(state)
        for newset, wi in infections.items():
            if self.allowed is not None and not newset <= self.allowed:
                continue
            for recset, wr in recoveries.items():
                self._tick()
                nxt = list(state)
                for u in recset:
                    nxt[u] = R
                for v in newset:
                    nxt[v] = I
                for ever, ws in self.outcomes(tuple(nxt), steps - 1).items():
                    terms[ever].append(wi * wr * ws)
        res = {ever: math.fsum(ws) for ever, ws in terms.items()}
        self.memo[key] = res
        return res


def _check(g, params, budget):
    if g.node_count > budget.max_nodes:
        raise BudgetExceeded(f"{g.node_count} nodes > max_nodes={budget.max_nodes}")
    if params.T > budget.max_steps:
        raise BudgetExceeded(f"T={params.T} > max_steps={budget.max_steps}")


def _start(n, source):
    state = [S] * n
    state[source] = I
    return tuple(state)


def outcome_distribution(g: StaticNetwork, params: SpreadingParams, source: int,
                         budget: EnumerationBudget = EnumerationBudget()) -> dict:
    """Exact law of the ever-infected set after ``params.T`` steps."""
    _check(g, params, budget)
    return _Enumerator(g, params, budget).outcomes(_start(g.node_count, source), params.T)


def exact_likelihood(g: StaticNetwork, params: SpreadingParams, source: int, snapshot: Snapshot,
                     budget: EnumerationBudget = EnumerationBudget()) -> float:
    """P(observed part of the ever-infected set equals the snapshot | source)."""
    _check(g, params, budget)
    everything = frozenset(range(g.node_count))
    mask = snapshot.observed_mask if snapshot.observed_mask is not None else everything
    target = snapshot.ever_infected
    allowed = target | (everything - mask)
    if source not in allowed:
        return 0.0
    enum = _Enumerator(g, params, budget, allowed=allowed)
    dist = enum.outcomes(_start(g.node_count, source), params.T)
    return math.fsum(w for ever, w in dist.items() if ever & mask == target)


def exact_posterior(g: StaticNetwork, params: SpreadingParams, snapshot: Snapshot,
                    budget: EnumerationBudget = EnumerationBudget()) -> Posterior:
    """Normalised exact likelihoods over the snapshot's nodes (uniform source prior)."""
    candidates = sorted(snapshot.ever_infected)
    lik = [exact_likelihood(g, params, c, snapshot, budget) for c in candidates]
    return Posterior.from_scores(candidates, lik, estimator="exact", likelihoods=lik)
