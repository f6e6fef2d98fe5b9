"""Command-line front end: ``patientzero {simulate,infer,verify,sweep,temporal}``.

Every run is described by a :class:`RunConfig`. Values come from the JSON
file given with ``--config`` and are overridden by explicit flags; the
effective configuration is written to ``<out>/config.json`` so the run can
be repeated with ``--config <out>/config.json``.

Exit codes: 0 success, 1 runtime failure (including an undefined posterior
or a failed verification), 2 configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from ._parallel import default_jobs
from .detectability import derive_seed, lattice_sweep, normalized_entropy, temporal_experiment
from .estimators import ESTIMATORS, EstimatorConfig, run_estimator
from .network import (NetworkFormatError, StaticNetwork, TemporalNetwork, load_static,
                      load_temporal, make_lattice, make_synthetic_temporal)
from .oracle import BudgetExceeded, EnumerationBudget, exact_posterior
from .posterior import total_variation
from .spreading import (Snapshot, SpreadingParams, StaticSimulator, TemporalParams, TemporalSimulator,
                        observe_subset, read_snapshot, simulate_static, simulate_temporal,
                        write_snapshot)

log = logging.getLogger("patientzero")

COMMANDS = ("simulate", "infer", "verify", "sweep", "temporal")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str = ""
    network: str | None = None
    temporal: str | None = None
    discard_before: int = 0
    snapshot: str | None = None
    observed: str | None = None
    source: str | None = None
    observe_fraction: float | None = None
    model: str = "sir"
    p: float = 0.5
    q: float = 0.5
    T: int = 5
    t0: int = 0
    t_end: int = 300
    epsilon: int = 0
    delta: int = 0
    estimator: str = "soft-margin"
    n: int = 2000
    widths: list | None = None
    tolerance: float = 0.05
    min_samples: int = 100
    threshold: float = 0.02
    p_grid: list | None = None
    q_grid: list | None = None
    realizations: int = 10
    central: bool = False
    min_snapshot: int = 1
    experiments: int = 100
    t0_range: list | None = None
    eligibility_days: int = 30
    seed: int = 0
    jobs: int | None = None
    out: str = "out"

    # not echoed: they do not change any result
    _NOT_ECHOED = ("jobs", "out")

    def to_json(self) -> str:
        d = {k: v for k, v in asdict(self).items() if k not in self._NOT_ECHOED}
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))

    def estimator_config(self) -> EstimatorConfig:
        kw = dict(name=self.estimator, n=self.n, tolerance=self.tolerance,
                  min_samples=self.min_samples)
        if self.widths:
            kw["widths"] = tuple(self.widths)
        return EstimatorConfig(**kw)


def _float_list(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _int_list(text):
    return [int(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("run configuration")
    g.add_argument("--config", help="JSON run configuration; flags override its values")
    g.add_argument("--network", help="edge-list file, or lattice:ROWSxCOLS")
    g.add_argument("--temporal", help="'u v t' contact file, or synthetic[:SIDE[:DAYS[:SEED]]]")
    g.add_argument("--discard-before", type=int, dest="discard_before",
                   help="drop contacts before this day and shift the rest to day 0")
    g.add_argument("--snapshot", help="file with one infected node label per line")
    g.add_argument("--observed", help="file listing the nodes whose state is observed")
    g.add_argument("--source", help="source label for simulate (default: drawn from seed)")
    g.add_argument("--observe-fraction", type=float, dest="observe_fraction",
                   help="simulate: observe only this fraction of node states")
    g.add_argument("--model", choices=["sir", "si", "ic"])
    g.add_argument("-p", type=float, help="transmission probability")
    g.add_argument("-q", type=float, help="recovery probability")
    g.add_argument("-T", type=int, help="number of steps (static networks)")
    g.add_argument("--t0", type=int, help="start day (temporal networks)")
    g.add_argument("--t-end", type=int, dest="t_end", help="observation day (temporal networks)")
    g.add_argument("--epsilon", type=int, help="half-width of the start-day window")
    g.add_argument("--delta", type=int, help="timestamp randomisation bin, days (0 = off)")
    g.add_argument("--estimator", choices=ESTIMATORS)
    g.add_argument("-n", type=int, help="simulations per candidate")
    g.add_argument("--widths", type=_float_list, help="soft-margin width grid, descending")
    g.add_argument("--tolerance", type=float, help="soft-margin split-half tolerance")
    g.add_argument("--min-samples", type=int, dest="min_samples")
    g.add_argument("--threshold", type=float, help="verify: maximum total-variation distance")
    g.add_argument("--p-grid", type=_float_list, dest="p_grid")
    g.add_argument("--q-grid", type=_float_list, dest="q_grid")
    g.add_argument("--realizations", type=int, help="sweep: snapshots per (p, q) cell")
    g.add_argument("--central", action="store_const", const=True,
                   help="sweep: always start from the central node")
    g.add_argument("--min-snapshot", type=int, dest="min_snapshot",
                   help="sweep: redraw snapshots with fewer infected nodes")
    g.add_argument("--experiments", type=int)
    g.add_argument("--t0-range", type=_int_list, dest="t0_range", help="temporal: LO,HI")
    g.add_argument("--eligibility-days", type=int, dest="eligibility_days")
    g.add_argument("--seed", type=int)
    g.add_argument("--jobs", type=int, help="worker processes (default: all cores)")
    g.add_argument("--out", help="output directory")
    g.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="patientzero",
                                     description="Epidemic source detection from a snapshot.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "simulate one epidemic and write its snapshot",
        "infer": "estimate the source posterior for a snapshot",
        "verify": "compare an estimator with the exact enumeration oracle",
        "sweep": "entropy sweep over (p, q) on a lattice",
        "temporal": "repeated detection experiments on a temporal network",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    base = {}
    if args.config:
        try:
            base = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    names = {f.name for f in fields(RunConfig)}
    for k, v in vars(args).items():
        if k in names and v is not None:
            base[k] = v
    base["command"] = args.command
    cfg = RunConfig.from_dict(base)
    cfg.model = cfg.model.lower()
    if cfg.estimator not in ESTIMATORS:
        raise ConfigError(f"unknown estimator {cfg.estimator!r}")
    return cfg


def load_network(cfg: RunConfig, out: Path):
    if cfg.network and cfg.temporal:
        raise ConfigError("give either --network or --temporal, not both")
    if cfg.network:
        if cfg.network.startswith("lattice:"):
            try:
                rows, cols = (int(x) for x in cfg.network[len("lattice:"):].lower().split("x"))
            except ValueError:
                raise ConfigError(f"bad lattice spec {cfg.network!r}; use lattice:ROWSxCOLS") from None
            return make_lattice(rows, cols)
        return load_static(cfg.network, id_map_path=out / "id_map.csv")
    if cfg.temporal:
        if cfg.temporal.startswith("synthetic"):
            parts = cfg.temporal.split(":")[1:]
            keys = ("side", "days", "seed")
            kw = {k: int(v) for k, v in zip(keys, parts)}
            return make_synthetic_temporal(**kw)
        return load_temporal(cfg.temporal, cfg.discard_before, id_map_path=out / "id_map.csv")
    raise ConfigError("a network is required (--network or --temporal)")


def _params(cfg: RunConfig, net):
    if isinstance(net, StaticNetwork):
        return SpreadingParams(cfg.model.upper(), cfg.p, cfg.q, cfg.T)
    if cfg.model != "sir":
        raise ConfigError("temporal networks support the SIR model only")
    return TemporalParams(cfg.p, cfg.q, cfg.t0, cfg.t_end)


def _simulator(cfg: RunConfig, net, params):
    if isinstance(net, StaticNetwork):
        return StaticSimulator(net, params)
    lo = max(net.t_min, cfg.t0 - cfg.epsilon)
    hi = min(cfg.t_end, cfg.t0 + cfg.epsilon)
    if lo > hi:
        raise ConfigError(f"start-day window {cfg.t0}+-{cfg.epsilon} misses the contact data "
                          f"[{net.t_min}, {cfg.t_end}]")
    return TemporalSimulator(net, params, t0_window=(lo, hi))


def _write(path: Path, text: str):
    path.write_text(text)
    log.info("wrote %s", path)


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    net = load_network(cfg, out)
    params = _params(cfg, net)
    if cfg.source is not None:
        source = net.index_of(cfg.source)
    else:
        source = int(np.random.default_rng(derive_seed(cfg.seed, 0)).integers(net.node_count))
    if isinstance(net, StaticNetwork):
        outcome = simulate_static(net, params, source, cfg.seed)
    else:
        outcome = simulate_temporal(net, params, source, cfg.seed)
    snap_path = out / "snapshot.txt"
    meta = {"source": net.labels[source], "seed": cfg.seed,
            "ever_infected_count": len(outcome.ever_infected)}
    if cfg.observe_fraction is not None:
        snapshot = observe_subset(outcome.ever_infected, net.node_count, cfg.observe_fraction,
                                  derive_seed(cfg.seed, 1))
        write_snapshot(snapshot, snap_path, net.labels, out / "observed.txt")
        meta["observed_count"] = len(snapshot.observed_mask)
        meta["observed_infected_count"] = len(snapshot.ever_infected)
    else:
        write_snapshot(Snapshot(outcome.ever_infected), snap_path, net.labels)
    _write(out / "outcome.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"source {meta['source']}: {meta['ever_infected_count']} nodes ever infected")
    return 0


def _read_snapshot(cfg, net):
    if not cfg.snapshot:
        raise ConfigError("--snapshot is required")
    try:
        return read_snapshot(cfg.snapshot, net, cfg.observed)
    except KeyError as exc:
        raise ConfigError(f"snapshot names a node not in the network: {exc}") from None


def cmd_infer(cfg: RunConfig, out: Path) -> int:
    net = load_network(cfg, out)
    params = _params(cfg, net)
    snapshot = _read_snapshot(cfg, net)
    graph = net if isinstance(net, StaticNetwork) else net.aggregate()
    post = run_estimator(cfg.estimator_config(), _simulator(cfg, net, params), snapshot,
                         cfg.seed, graph=graph, jobs=cfg.jobs)
    _write(out / "posterior.json", post.to_json(net.labels))
    if not post.defined:
        print(f"error: posterior undefined: no simulation reproduced the snapshot "
              f"(n={cfg.n}); raise -n or use --estimator soft-margin", file=sys.stderr)
        return 1
    _write(out / "posterior.csv", post.to_csv(net.labels))
    print(f"ML candidate: {net.labels[post.ml_candidate()]}")
    print(f"normalized entropy: {normalized_entropy(post):.6f}")
    return 0


def cmd_verify(cfg: RunConfig, out: Path) -> int:
    net = load_network(cfg, out)
    if not isinstance(net, StaticNetwork):
        raise ConfigError("verify works on static networks only")
    params = _params(cfg, net)
    snapshot = _read_snapshot(cfg, net)
    report = {"estimator": cfg.estimator, "n": cfg.n, "threshold": cfg.threshold}
    try:
        exact = exact_posterior(net, params, snapshot, EnumerationBudget())
    except BudgetExceeded as exc:
        report.update(status="budget_exceeded", detail=str(exc))
        _write(out / "verify.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
        print(f"error: instance exceeds the oracle budget: {exc}", file=sys.stderr)
        return 2
    post = run_estimator(cfg.estimator_config(), StaticSimulator(net, params), snapshot,
                         cfg.seed, graph=net, jobs=cfg.jobs)
    report["exact"] = exact.to_json_dict(net.labels)
    report["estimate"] = post.to_json_dict(net.labels)
    if not exact.defined:
        report.update(status="exact_undefined", tv=None)
        ok = False
    elif not post.defined:
        report.update(status="fail", tv=None)
        ok = False
    else:
        tv = total_variation(exact, post)
        ok = tv <= cfg.threshold
        report.update(status="pass" if ok else "fail", tv=tv)
    _write(out / "verify.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    tv = report["tv"]
    print(f"{report['status'].upper()}: TV={'undefined' if tv is None else f'{tv:.6f}'} "
          f"(threshold {cfg.threshold})")
    return 0 if ok else 1


def cmd_sweep(cfg: RunConfig, out: Path) -> int:
    if not (cfg.network and cfg.network.startswith("lattice:")):
        raise ConfigError("sweep needs --network lattice:ROWSxCOLS")
    g = load_network(cfg, out)
    rows = int(cfg.network.split(":")[1].lower().split("x")[0])
    cols = g.node_count // rows
    recs = lattice_sweep(rows, cols, cfg.T, cfg.p_grid or [cfg.p], cfg.q_grid or [cfg.q],
                         cfg.realizations, cfg.estimator_config(), cfg.seed,
                         central_source=cfg.central, model=cfg.model.upper(),
                         min_snapshot_size=cfg.min_snapshot, out=out / "detectability.csv",
                         jobs=cfg.jobs)
    print(f"{len(recs)} new records in {out / 'detectability.csv'}")
    return 0


def cmd_temporal(cfg: RunConfig, out: Path) -> int:
    net = load_network(cfg, out)
    if not isinstance(net, TemporalNetwork):
        raise ConfigError("temporal needs --temporal")
    params = TemporalParams(cfg.p, cfg.q, 0, cfg.t_end)
    report = temporal_experiment(net, params, cfg.experiments, tuple(cfg.t0_range or (100, 200)),
                                 cfg.epsilon, cfg.delta, cfg.estimator_config(), cfg.seed,
                                 cfg.eligibility_days, out=out / "experiments.csv",
                                 summary_out=out / "summary.json", jobs=cfg.jobs)
    for d, frac in report.summary()["fraction_within"].items():
        print(f"distance <= {d}: {frac:.3f}")
    return 0


HANDLERS = {"simulate": cmd_simulate, "infer": cmd_infer, "verify": cmd_verify,
            "sweep": cmd_sweep, "temporal": cmd_temporal}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        if cfg.jobs is None:
            cfg.jobs = default_jobs()
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        _write(out / "config.json", cfg.to_json())
        return HANDLERS[cfg.command](cfg, out)
    except (ConfigError, NetworkFormatError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
