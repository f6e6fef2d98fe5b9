"""Detectability (one minus normalised posterior entropy) and experiment harnesses.

``lattice_sweep`` produces the entropy-vs-(p, q) data on grid lattices and
``temporal_experiment`` the distance-to-true-source statistics on contact
sequences. Both stream their records to CSV as they complete and can resume
an interrupted run from what is already on disk.
"""
from __future__ import annotations

import csv
import json
import math
import os
from collections import Counter
from dataclasses import asdict, dataclass, field
from functools import partial
from pathlib import Path

import numpy as np

from ._parallel import pimap
from .estimators import EstimatorConfig, run_estimator
from .network import TemporalNetwork, graph_distance, make_lattice, randomize_bins
from .posterior import Posterior, UndefinedPosterior
from .spreading import (Snapshot, SpreadingParams, StaticSimulator, TemporalParams,
                        TemporalSimulator, simulate_static, simulate_temporal)

DETECTABILITY_FIELDS = ["p", "q", "T", "rows", "cols", "realization", "H", "D", "estimator",
                        "n", "a", "converged"]
EXPERIMENT_FIELDS = ["experiment", "true_source", "ml_candidate", "distance", "epsilon",
                     "delta", "n"]

# seed-stream tags
_TRUTH, _ESTIMATE, _SHUFFLE = 1, 2, 3
_MAX_REDRAWS = 10_000


def derive_seed(seed, *key) -> int:
    """Independent 63-bit seed for the sub-task identified by ``key``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def normalized_entropy(post: Posterior) -> float:
    """Shannon entropy divided by ``ln K`` for ``K`` candidates (0 when ``K == 1``)."""
    post.require_defined()
    k = len(post.candidates)
    if k == 0:
        raise ValueError("posterior has no candidates")
    if k == 1:
        return 0.0
    p = post.probs[post.probs > 0]
    h = float(-(p * np.log(p)).sum() / math.log(k))
    return min(1.0, max(0.0, h))


@dataclass
class DetectabilityRecord:
    p: float
    q: float
    T: int
    rows: int
    cols: int
    realization: int
    H: float | None
    estimator: str
    n: int
    a: float | None
    converged: str
    source: int = -1
    snapshot_size: int = 0
    redraws: int = 0

    @property
    def D(self) -> float | None:
        return None if self.H is None else 1.0 - self.H

    def csv_row(self) -> list:
        fmt = lambda v: "" if v is None else repr(float(v))
        return [repr(float(self.p)), repr(float(self.q)), self.T, self.rows, self.cols,
                self.realization, fmt(self.H), fmt(self.D), self.estimator, self.n,
                fmt(self.a), self.converged]


class _ResumableCSV:
    """Append-only CSV whose existing complete rows mark finished work.

    A ``<name>.manifest.json`` next to the file pins the configuration, so a
    resume with different settings is refused rather than mixed in.
    """

    def __init__(self, path, header, config: dict):
        self.path = Path(path)
        self.header = header
        self.manifest = self.path.with_name(self.path.name + ".manifest.json")
        self.done = []
        if self.path.exists() and self.manifest.exists():
            saved = json.loads(self.manifest.read_text())
            if saved.get("config") != config:
                raise ValueError(f"{self.path} was produced with a different configuration")
            self.done = self._complete_rows()
        else:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "w", newline="") as fh:
                csv.writer(fh, lineterminator="\n").writerow(header)
        self.config = config
        self._write_manifest()

    def _complete_rows(self):
        text = self.path.read_text()
        if text and not text.endswith("\n"):
            # drop a row cut short by an interruption
            text = text[:text.rfind("\n") + 1]
            self.path.write_text(text)
        rows = list(csv.reader(text.splitlines()))
        return rows[1:]

    def _write_manifest(self):
        tmp = self.manifest.with_suffix(".tmp")
        tmp.write_text(json.dumps({"config": self.config, "completed": len(self.done)},
                                  indent=2, sort_keys=True) + "\n")
        os.replace(tmp, self.manifest)

    def append(self, row):
        with open(self.path, "a", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerow(row)
        self.done.append([str(x) for x in row])
        self._write_manifest()


def _lattice_task(rows, cols, T, model, est: EstimatorConfig, central, min_size, seed, task):
    (ip, p), (iq, q), r = task
    params = SpreadingParams(model, p, q, T)
    g = make_lattice(rows, cols)
    rng = np.random.default_rng(derive_seed(seed, _TRUTH, ip, iq, r))
    for redraws in range(_MAX_REDRAWS):
        if central:
            source = (rows // 2) * cols + cols // 2
        else:
            source = int(rng.integers(g.node_count))
        truth = simulate_static(g, params, source, int(rng.integers(2 ** 62)))
        if len(truth.ever_infected) >= min_size:
            break
    else:
        raise RuntimeError(f"no snapshot with >= {min_size} nodes in {_MAX_REDRAWS} draws "
                           f"at p={p}, q={q}")
    snapshot = Snapshot(truth.ever_infected)
    post = run_estimator(est, StaticSimulator(g, params), snapshot,
                         derive_seed(seed, _ESTIMATE, ip, iq, r), graph=g)
    if post.defined:
        H = normalized_entropy(post)
        conv = str(bool(post.meta.get("converged", True)))
    else:
        H, conv = None, "undefined"
    return DetectabilityRecord(p, q, T, rows, cols, r, H, est.name, est.n, post.meta.get("a"),
                               conv, source, len(snapshot), redraws)


def lattice_sweep(rows: int, cols: int, T: int, p_grid, q_grid, realizations: int,
                  estimator: EstimatorConfig = EstimatorConfig(), seed=0, central_source=False,
                  model="SIR", min_snapshot_size: int = 1, out=None,
                  jobs: int = 1) -> list[DetectabilityRecord]:
    """Entropy of the estimated posterior for random snapshots on a ``rows x cols`` lattice.

    For each ``(p, q)`` cell, ``realizations`` snapshots are simulated from a
    uniformly drawn source (or the central node) and one record per snapshot
    is returned. Snapshots smaller than ``min_snapshot_size`` are redrawn
    (the count is kept on each record); with the default of 1 every draw is
    kept, and single-node snapshots score ``H = 0``. Undefined posteriors are
    kept with ``converged='undefined'``.
    With ``out`` the records are streamed to CSV and a rerun resumes.
    """
    p_grid, q_grid = list(p_grid), list(q_grid)
    if not p_grid or not q_grid or realizations < 1:
        raise ValueError("empty sweep")
    tasks = [((ip, float(p)), (iq, float(q)), r) for ip, p in enumerate(p_grid)
             for iq, q in enumerate(q_grid) for r in range(realizations)]
    sink = None
    if out is not None:
        config = {"rows": rows, "cols": cols, "T": T, "p_grid": [float(p) for p in p_grid],
                  "q_grid": [float(q) for q in q_grid], "realizations": realizations,
                  "estimator": asdict(estimator), "seed": int(seed),
                  "central_source": bool(central_source), "model": model,
                  "min_snapshot_size": min_snapshot_size}
        config["estimator"]["widths"] = list(estimator.widths)
        sink = _ResumableCSV(out, DETECTABILITY_FIELDS, config)
        tasks = tasks[len(sink.done):]
    fn = partial(_lattice_task, rows, cols, T, model, estimator, central_source,
                 min_snapshot_size, seed)
    records = []
    for rec in pimap(fn, tasks, jobs):
        if sink is not None:
            sink.append(rec.csv_row())
        records.append(rec)
    return records


def read_detectability_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@dataclass
class ExperimentRow:
    experiment: int
    true_source: int
    ml_candidate: int
    distance: int | None
    epsilon: int
    delta: int
    n: int
    t0: int = 0
    snapshot_size: int = 0
    redraws: int = 0

    def csv_row(self) -> list:
        return [self.experiment, self.true_source, self.ml_candidate,
                "unreachable" if self.distance is None else self.distance,
                self.epsilon, self.delta, self.n]


@dataclass
class ExperimentReport:
    rows: list
    config: dict = field(default_factory=dict)

    def histogram(self) -> dict[str, float]:
        """Fraction of experiments per ML-to-source distance, plus 'unreachable'."""
        if not self.rows:
            return {}
        counts = Counter("unreachable" if r.distance is None else str(r.distance)
                         for r in self.rows)
        keys = sorted((k for k in counts if k != "unreachable"), key=int)
        if "unreachable" in counts:
            keys.append("unreachable")
        return {k: counts[k] / len(self.rows) for k in keys}

    def fraction_within(self, d: int) -> float:
        if not self.rows:
            return float("nan")
        return sum(r.distance is not None and r.distance <= d for r in self.rows) / len(self.rows)

    def summary(self) -> dict:
        dmax = max((r.distance for r in self.rows if r.distance is not None), default=0)
        return {
            "experiments": len(self.rows),
            "histogram": self.histogram(),
            "fraction_within": {str(d): self.fraction_within(d) for d in range(dmax + 1)},
            "redraws": sum(r.redraws for r in self.rows),
            "config": self.config,
        }


def _draw_truth(tn, params, t0_range, eligibility_days, rng, max_tries=10_000):
    redraws = 0
    for _ in range(max_tries):
        t0 = int(rng.integers(t0_range[0], t0_range[1] + 1))
        eligible = tn.active_nodes(t0, t0 + eligibility_days)
        if len(eligible) == 0:
            redraws += 1
            continue
        source = int(rng.choice(eligible))
        truth = simulate_temporal(tn, TemporalParams(params.p, params.q, t0, params.t_end),
                                  source, int(rng.integers(2 ** 62)))
        if len(truth.ever_infected) >= 2:
            return t0, source, Snapshot(truth.ever_infected), redraws
        redraws += 1
    raise RuntimeError(f"no epidemic with >= 2 infected nodes in {max_tries} draws")


def _experiment_task(tn, agg, params, t0_range, epsilon, delta, est, eligibility_days, seed, e):
    rng = np.random.default_rng(derive_seed(seed, _TRUTH, e))
    t0, source, snapshot, redraws = _draw_truth(tn, params, t0_range, eligibility_days, rng)
    seen = randomize_bins(tn, delta, derive_seed(seed, _SHUFFLE, e)) if delta > 0 else tn
    lo = max(seen.t_min, t0 - epsilon)
    hi = min(params.t_end, t0 + epsilon)
    sim = TemporalSimulator(seen, TemporalParams(params.p, params.q, t0, params.t_end),
                            t0_window=(lo, hi))
    post = run_estimator(est, sim, snapshot, derive_seed(seed, _ESTIMATE, e), graph=agg)
    try:
        ml = post.ml_candidate()
    except UndefinedPosterior:
        ml = -1
    dist = graph_distance(agg, ml, source) if ml >= 0 else None
    return ExperimentRow(e, source, ml, dist, epsilon, delta, est.n, t0, len(snapshot), redraws)


def temporal_experiment(tn: TemporalNetwork, params: TemporalParams, experiments: int,
                        t0_range=(100, 200), epsilon: int = 0, delta: int = 0,
                        estimator: EstimatorConfig = EstimatorConfig(n=2000), seed=0,
                        eligibility_days: int = 30, out=None, summary_out=None,
                        jobs: int = 1) -> ExperimentReport:
    """Repeated source-detection experiments on a contact sequence.

    Each experiment draws a start day from ``t0_range`` and a source among
    the nodes with a contact in the following ``eligibility_days``, simulates
    the true epidemic up to ``params.t_end`` (redrawing when fewer than two
    nodes get infected), hides the contact order inside ``delta``-day bins
    if ``delta > 0``, and estimates the source with the start day known only
    up to ``+-epsilon``. Distances are hop counts on the aggregated graph.

    The true epidemics depend only on ``seed`` and the experiment index, so
    runs with different ``epsilon``, ``delta`` or estimator are paired.
    """
    if t0_range[0] > t0_range[1] or t0_range[0] < tn.t_min or t0_range[1] > params.t_end:
        raise ValueError("t0 range must lie within the data and before t_end")
    agg = tn.aggregate()
    config = {"p": params.p, "q": params.q, "t_end": params.t_end, "experiments": experiments,
              "t0_range": list(t0_range), "epsilon": epsilon, "delta": delta,
              "estimator": asdict(estimator), "seed": int(seed),
              "eligibility_days": eligibility_days}
    config["estimator"]["widths"] = list(estimator.widths)
    tasks = list(range(experiments))
    rows = []
    sink = None
    if out is not None:
        sink = _ResumableCSV(out, EXPERIMENT_FIELDS, config)
        for r in sink.done:
            e = int(r[0])
            rng = np.random.default_rng(derive_seed(seed, _TRUTH, e))
            t0, _, snapshot, redraws = _draw_truth(tn, params, t0_range, eligibility_days, rng)
            rows.append(ExperimentRow(e, int(r[1]), int(r[2]),
                                      None if r[3] == "unreachable" else int(r[3]),
                                      int(r[4]), int(r[5]), int(r[6]), t0, len(snapshot),
                                      redraws))
        tasks = tasks[len(sink.done):]
    fn = partial(_experiment_task, tn, agg, params, tuple(t0_range), epsilon, delta, estimator,
                 eligibility_days, seed)
    for row in pimap(fn, tasks, jobs):
        if sink is not None:
            sink.append(row.csv_row())
        rows.append(row)
    report = ExperimentReport(rows, config)
    if summary_out is not None:
        Path(summary_out).write_text(json.dumps(report.summary(), indent=2, sort_keys=True) + "\n")
    return report
