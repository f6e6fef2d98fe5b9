"""Epidemic source detection from a single snapshot of ever-infected nodes."""

__version__ = "0.1.0"

from .detectability import (ExperimentReport, lattice_sweep, normalized_entropy,
                            temporal_experiment)
from .estimators import (EstimatorConfig, WidthSchedule, direct_mc, jaccard, jordan_center,
                         marginalize_pq, marginalize_t0, partial_observation_similarity,
                         random_estimator, run_estimator, soft_margin, soft_margin_adaptive)
from .network import (StaticNetwork, TemporalNetwork, graph_distance, load_static,
                      load_temporal, make_lattice, make_synthetic_temporal, randomize_bins)
from .oracle import EnumerationBudget, exact_likelihood, exact_posterior
from .posterior import Posterior, UndefinedPosterior, total_variation
from .spreading import (PQPrior, SimOutcome, Snapshot, SpreadingParams, StaticSimulator,
                        TemporalParams, TemporalSimulator, batch_simulate, simulate_static,
                        simulate_temporal)
