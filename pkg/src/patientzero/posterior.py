"""Posterior distribution over candidate source nodes."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np


class UndefinedPosterior(RuntimeError):
    """No candidate received any likelihood mass."""


@dataclass
class Posterior:
    candidates: tuple
    probs: np.ndarray
    meta: dict = field(default_factory=dict)
    defined: bool = True

    @classmethod
    def from_scores(cls, candidates, scores, **meta) -> "Posterior":
        """Normalise non-negative scores; an all-zero vector gives an undefined posterior."""
        candidates = tuple(int(c) for c in candidates)
        scores = np.asarray(scores, dtype=float)
        total = scores.sum()
        if not candidates or total <= 0 or not np.isfinite(total):
            return cls(candidates, np.zeros(len(candidates)), meta, defined=False)
        return cls(candidates, scores / total, meta)

    @classmethod
    def from_log_scores(cls, candidates, log_scores, **meta) -> "Posterior":
        log_scores = np.asarray(log_scores, dtype=float)
        if len(log_scores) == 0 or not np.isfinite(log_scores.max()):
            return cls(tuple(candidates), np.zeros(len(log_scores)), meta, defined=False)
        w = np.exp(log_scores - log_scores.max())
        return cls.from_scores(candidates, w, **meta)

    def __getitem__(self, node) -> float:
        try:
            return float(self.probs[self.candidates.index(node)])
        except ValueError:
            return 0.0

    def as_dict(self) -> dict[int, float]:
        return {c: float(p) for c, p in zip(self.candidates, self.probs)}

    def require_defined(self):
        if not self.defined:
            raise UndefinedPosterior(
                f"no candidate scored ({self.meta.get('estimator', 'estimator')}); "
                "increase n or use the soft-margin estimator")
        return self

    def ml_candidate(self) -> int:
        """Most probable candidate, lowest id on ties.

        Estimators that pick at random (the uniform baseline) store their
        pick in ``meta['pick']`` and it takes precedence.
        """
        self.require_defined()
        if "pick" in self.meta:
            return int(self.meta["pick"])
        top = self.probs.max()
        tied = sorted(c for c, p in zip(self.candidates, self.probs) if p == top)
        if len(tied) > 1:
            self.meta["ml_ties"] = tied
        return tied[0]

    def to_json_dict(self, labels=None) -> dict:
        name = (lambda c: labels[c]) if labels is not None else (lambda c: c)
        meta = {k: _plain(v) for k, v in sorted(self.meta.items())}
        return {
            "candidates": [name(c) for c in self.candidates],
            "probs": [float(p) for p in self.probs],
            "defined": self.defined,
            "meta": meta,
        }

    def to_json(self, labels=None) -> str:
        return json.dumps(self.to_json_dict(labels), indent=2, sort_keys=True) + "\n"

    def to_csv(self, labels=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["node", "probability"])
        for c, p in zip(self.candidates, self.probs):
            w.writerow([labels[c] if labels is not None else c, repr(float(p))])
        return buf.getvalue()


def _plain(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


def total_variation(a: Posterior, b: Posterior) -> float:
    """Half the L1 distance between two posteriors over the union of their supports."""
    nodes = sorted(set(a.candidates) | set(b.candidates))
    return 0.5 * sum(abs(a[n] - b[n]) for n in nodes)
