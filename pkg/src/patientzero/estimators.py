"""Source estimators: direct Monte-Carlo, Soft-Margin and structural baselines.

All Monte-Carlo estimators take a simulator (``StaticSimulator`` or
``TemporalSimulator``) and run ``n`` simulations per candidate, each
candidate on its own seed stream, so the result is the same for any
``jobs``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import partial

import numpy as np
from scipy.special import logsumexp

from ._parallel import pmap
from .network import StaticNetwork, bfs_distances
from .posterior import Posterior, total_variation
from .spreading import PQPrior, SimOutcome, Snapshot


def jaccard(s1, s2) -> float:
    """|s1 & s2| / |s1 | s2|, with 1 for two empty sets."""
    s1, s2 = set(s1), set(s2)
    union = len(s1 | s2)
    if union == 0:
        return 1.0
    return len(s1 & s2) / union


def partial_observation_similarity(snapshot: Snapshot, outcome: SimOutcome) -> float:
    """Jaccard similarity after restricting both sets to the observed nodes."""
    if snapshot.observed_mask is None:
        return jaccard(snapshot.ever_infected, outcome.ever_infected)
    mask = snapshot.observed_mask
    return jaccard(snapshot.ever_infected & mask, outcome.ever_infected & mask)


def similarities(ever: np.ndarray, target: np.ndarray, observed: np.ndarray) -> np.ndarray:
    """Row-wise (masked) Jaccard similarity of a boolean outcome matrix to ``target``."""
    obs = observed.astype(bool)
    e = ever[:, obs]
    t = target.astype(bool)[obs]
    inter = e[:, t].sum(axis=1)
    union = e.sum(axis=1) + t.sum() - inter
    out = np.ones(len(ever))
    nz = union > 0
    out[nz] = inter[nz] / union[nz]
    return out


def exact_matches(ever: np.ndarray, target: np.ndarray, observed: np.ndarray) -> np.ndarray:
    obs = observed.astype(bool)
    return (ever[:, obs] == target.astype(bool)[obs]).all(axis=1)


def _candidates(snapshot: Snapshot, candidates) -> list[int]:
    if not snapshot.ever_infected:
        raise ValueError("snapshot has no infected nodes")
    if candidates is None:
        return sorted(snapshot.ever_infected)
    candidates = sorted(int(c) for c in candidates)
    if not set(candidates) <= snapshot.ever_infected:
        raise ValueError("candidates must be infected nodes of the snapshot")
    return candidates


def _hits(sim, snapshot, n, seed, source):
    target, observed = snapshot.masks(sim.node_count)
    return np.concatenate([exact_matches(ever, target, observed)
                           for ever, _ in sim.chunks(source, n, seed, snapshot=snapshot, prune=True)])


def _sims(sim, snapshot, n, seed, early_exit_width, source):
    target, observed = snapshot.masks(sim.node_count)
    return np.concatenate([similarities(ever, target, observed)
                           for ever, _ in sim.chunks(source, n, seed, snapshot=snapshot,
                                                     early_exit_width=early_exit_width)])


def direct_mc(sim, snapshot: Snapshot, candidates=None, n: int = 10_000, seed=0,
              jobs: int = 1, checks: int = 10) -> Posterior:
    """Posterior proportional to the number of runs reproducing the snapshot exactly.

    Runs are pruned as soon as they infect a node outside the snapshot, which
    cannot change an exact-match count. Convergence is judged on ``checks``
    cumulative checkpoints: the last three posterior updates must each move
    less than 0.01 in total variation and at least 100 hits must be seen.
    """
    cands = _candidates(snapshot, candidates)
    if n < 1:
        raise ValueError("n must be >= 1")
    hits = np.array(pmap(partial(_hits, sim, snapshot, n, seed), cands, jobs)).reshape(len(cands), n)
    counts = hits.sum(axis=1)

    marks = sorted({max(1, (k * n) // checks) for k in range(1, checks + 1)})
    cum = np.cumsum(hits, axis=1)
    trace = []
    prev = None
    for m in marks:
        post = Posterior.from_scores(cands, cum[:, m - 1])
        if prev is not None:
            trace.append(total_variation(prev, post) if (prev.defined and post.defined) else 1.0)
        prev = post
    converged = (len(trace) >= 3 and max(trace[-3:]) < 0.01 and counts.sum() >= 100)

    return Posterior.from_scores(
        cands, counts, estimator="direct", n=n, hits={c: int(k) for c, k in zip(cands, counts)},
        converged=bool(converged), tv_trace=[round(x, 12) for x in trace])


def similarity_samples(sim, snapshot: Snapshot, candidates=None, n: int = 1000, seed=0,
                       jobs: int = 1, early_exit_width=None) -> dict[int, np.ndarray]:
    """Per-candidate Jaccard similarities of ``n`` simulated outcomes to the snapshot."""
    cands = _candidates(snapshot, candidates)
    out = pmap(partial(_sims, sim, snapshot, n, seed, early_exit_width), cands, jobs)
    return dict(zip(cands, out))


def _log_soft_margin(x: np.ndarray, a: float) -> float:
    return float(logsumexp(-((x - 1.0) ** 2) / a ** 2) - np.log(len(x)))


def soft_margin(samples, a: float) -> dict[int, float]:
    """Kernel-weighted likelihood, the mean of ``exp(-(x-1)^2 / a^2)`` per candidate."""
    if a <= 0:
        raise ValueError("width a must be positive")
    if not samples:
        raise ValueError("no samples")
    out = {}
    for c, x in samples.items():
        x = np.asarray(x, dtype=float)
        if len(x) == 0:
            raise ValueError(f"no samples for candidate {c}")
        out[c] = float(np.mean(np.exp(-((x - 1.0) ** 2) / a ** 2)))
    return out


def soft_margin_posterior(samples, width: float, **meta) -> Posterior:
    cands = sorted(samples)
    logs = [_log_soft_margin(np.asarray(samples[c], dtype=float), width) for c in cands]
    return Posterior.from_log_scores(cands, logs, **meta)


@dataclass(frozen=True)
class WidthSchedule:
    widths: tuple = (0.8, 0.4, 0.2, 0.1, 0.05, 0.025, 0.0125)
    tolerance: float = 0.05
    min_samples: int = 100

    def __post_init__(self):
        w = tuple(float(a) for a in self.widths)
        if not w or any(a <= 0 for a in w) or any(x <= y for x, y in zip(w, w[1:])):
            raise ValueError("widths must be positive and strictly decreasing")
        object.__setattr__(self, "widths", w)


def select_width(samples, schedule: WidthSchedule = WidthSchedule()):
    """Pick the smallest width whose split-half posteriors agree.

    Each candidate's samples are split into two halves. A width counts as
    converged when the two half-sample posteriors differ by at most
    ``schedule.tolerance`` for every candidate and name the same most likely
    source. Returns ``(a, converged, diagnostics)``; if no width converges
    the widest one is returned with ``converged=False``.
    """
    cands = sorted(samples)
    half = min(len(samples[c]) for c in cands) // 2
    first = {c: np.asarray(samples[c][:half], dtype=float) for c in cands}
    second = {c: np.asarray(samples[c][half:2 * half], dtype=float) for c in cands}
    passing = []
    diag = {}
    for a in schedule.widths:
        p1 = soft_margin_posterior(first, a)
        p2 = soft_margin_posterior(second, a)
        if not (p1.defined and p2.defined):
            diag[a] = None
            continue
        gap = float(np.max(np.abs(p1.probs - p2.probs)))
        same_ml = p1.ml_candidate() == p2.ml_candidate()
        diag[a] = round(gap, 12)
        if gap <= schedule.tolerance and same_ml:
            passing.append(a)
    if passing:
        return min(passing), True, diag
    return schedule.widths[0], False, diag


def soft_margin_adaptive(sim, snapshot: Snapshot, candidates=None, n: int = 1000, seed=0,
                         schedule: WidthSchedule = WidthSchedule(), jobs: int = 1,
                         early_exit: bool = False) -> Posterior:
    """Soft-Margin posterior at an adaptively chosen kernel width.

    With ``early_exit`` a run is abandoned once even the widest kernel would
    give it weight below 1e-12; that changes each likelihood by less than
    1e-12. Off by default.
    """
    if n < 2 * schedule.min_samples:
        raise ValueError(f"n={n} is below 2 * min_samples={2 * schedule.min_samples}")
    samples = similarity_samples(sim, snapshot, candidates, n, seed, jobs,
                                 early_exit_width=schedule.widths[0] if early_exit else None)
    a, converged, diag = select_width(samples, schedule)
    return soft_margin_posterior(samples, a, estimator="soft-margin", n=n, a=a,
                                 converged=converged, half_gaps=diag)


def marginalize_t0(sim, snapshot: Snapshot, candidates=None, n: int = 1000, seed=0,
                   window=None, schedule: WidthSchedule = WidthSchedule(),
                   jobs: int = 1) -> Posterior:
    """Soft-Margin estimate with each run's start day drawn uniformly from ``window``."""
    lo, hi = int(window[0]), int(window[1])
    if lo > hi:
        raise ValueError("empty t0 window")
    if lo < sim.tn.t_min or hi > sim.params.t_end:
        raise ValueError(f"t0 window [{lo}, {hi}] outside [{sim.tn.t_min}, {sim.params.t_end}]")
    post = soft_margin_adaptive(sim.with_t0_window((lo, hi)), snapshot, candidates, n, seed,
                                schedule, jobs)
    post.meta["t0_window"] = [lo, hi]
    return post


def marginalize_pq(sim, snapshot: Snapshot, candidates=None, n: int = 10_000, seed=0,
                   prior: PQPrior = None, estimator: str = "direct",
                   schedule: WidthSchedule = WidthSchedule(), jobs: int = 1) -> Posterior:
    """Estimate with each run's ``(p, q)`` drawn from a finite prior."""
    msim = sim.with_pq_prior(prior)
    if estimator == "direct":
        post = direct_mc(msim, snapshot, candidates, n, seed, jobs)
    elif estimator == "soft-margin":
        post = soft_margin_adaptive(msim, snapshot, candidates, n, seed, schedule, jobs)
    else:
        raise ValueError(f"unknown estimator {estimator!r}")
    post.meta["pq_prior"] = [list(pt) + [w] for pt, w in zip(prior.points, prior.weights)]
    return post


def jordan_center(g: StaticNetwork, snapshot: Snapshot) -> Posterior:
    """Uniform posterior over the infected nodes of minimum eccentricity.

    Eccentricity is the largest hop distance to any infected node; it is
    infinite when some infected node cannot be reached.
    """
    cands = _candidates(snapshot, None)
    infected = np.array(cands)
    ecc = []
    for c in cands:
        d = bfs_distances(g, c)[infected]
        ecc.append(np.inf if (d < 0).any() else float(d.max()))
    ecc = np.array(ecc)
    best = ecc == ecc.min()
    return Posterior.from_scores(cands, best.astype(float), estimator="jordan",
                                 eccentricity=float(ecc.min()))


def random_estimator(snapshot: Snapshot, seed=0) -> Posterior:
    """Uniform posterior; ``meta['pick']`` is a seeded uniform choice of source."""
    cands = _candidates(snapshot, None)
    pick = cands[int(np.random.default_rng(seed).integers(len(cands)))]
    return Posterior.from_scores(cands, np.ones(len(cands)), estimator="random", pick=pick)


ESTIMATORS = ("direct", "soft-margin", "jordan", "random")


@dataclass(frozen=True)
class EstimatorConfig:
    """Which estimator to run and with what budget."""

    name: str = "soft-margin"
    n: int = 2000
    widths: tuple = WidthSchedule.widths
    tolerance: float = WidthSchedule.tolerance
    min_samples: int = WidthSchedule.min_samples
    early_exit: bool = False

    def __post_init__(self):
        if self.name not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.name!r}; expected one of {ESTIMATORS}")
        object.__setattr__(self, "widths", tuple(float(a) for a in self.widths))

    @property
    def schedule(self) -> WidthSchedule:
        return WidthSchedule(self.widths, self.tolerance, self.min_samples)


def run_estimator(cfg: EstimatorConfig, sim, snapshot: Snapshot, seed=0, graph=None,
                  jobs: int = 1) -> Posterior:
    """Dispatch on ``cfg.name``; ``graph`` is needed only by the Jordan baseline."""
    if cfg.name == "direct":
        return direct_mc(sim, snapshot, None, cfg.n, seed, jobs)
    if cfg.name == "soft-margin":
        return soft_margin_adaptive(sim, snapshot, None, cfg.n, seed, cfg.schedule, jobs,
                                    early_exit=cfg.early_exit)
    if cfg.name == "jordan":
        if graph is None:
            raise ValueError("the Jordan estimator needs a static graph")
        return jordan_center(graph, snapshot)
    return random_estimator(snapshot, seed)
