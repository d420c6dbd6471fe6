"""Gold-standard viewpoint distributions and evaluation metrics.

The gold distribution for a view is a discrete normal over the rings of its
gold cell: ring k in 0..3 carries the standard normal density at k/sigma,
everything farther carries zero.  Model quality is measured as
KL(gold || predicted) plus classical precision@k / recall@k.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .polysphere import PolySphere
from .scorer import ScoreMap

__all__ = [
    "DEFAULT_EPSILON",
    "DEFAULT_SIGMA",
    "EvalEntry",
    "EvaluationReport",
    "GoldDistribution",
    "RankedList",
    "RetrievalQuery",
    "evaluate_model",
    "gold_distribution",
    "kl_divergence",
    "normalize_map",
    "precision_at_k",
    "recall_at_k",
]

DEFAULT_SIGMA = 1.0
DEFAULT_EPSILON = 1e-9

GOLD_MAX_RING = 3

_WEIGHT_SUM_TOL = 1e-12


@dataclass(frozen=True)
class GoldDistribution:
    """Target probability distribution over cells for one canonical view."""

    gold_cell: int
    sigma: float
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=float)
        if w.ndim != 1:
            raise ValueError("weights must be a flat per-cell vector")
        if np.any(w < 0) or abs(float(w.sum()) - 1.0) > _WEIGHT_SUM_TOL:
            raise ValueError("weights must be non-negative and sum to 1")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @property
    def n_cells(self) -> int:
        return self.weights.shape[0]

    @property
    def support(self) -> np.ndarray:
        return np.nonzero(self.weights > 0)[0]

    def to_dict(self) -> dict:
        return {
            "gold_cell": self.gold_cell,
            "sigma": self.sigma,
            "weights": [float(v) for v in self.weights],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GoldDistribution":
        return cls(int(data["gold_cell"]), float(data["sigma"]), np.asarray(data["weights"]))


def gold_distribution(sphere: PolySphere, gold_cell: int, sigma: float = DEFAULT_SIGMA) -> GoldDistribution:
    """Discrete normal over rings 0..3 of the gold cell, normalized to sum 1."""
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    weights = np.zeros(sphere.n_cells)
    for k in range(GOLD_MAX_RING + 1):
        density = math.exp(-0.5 * (k / sigma) ** 2) / math.sqrt(2.0 * math.pi)
        for c in sphere.ring(gold_cell, k):
            weights[c] = density
    weights /= weights.sum()
    return GoldDistribution(gold_cell=gold_cell, sigma=float(sigma), weights=weights)


def normalize_map(score_map, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Shift-min normalization of raw scores into a strictly positive distribution."""
    scores = score_map.scores if isinstance(score_map, ScoreMap) else np.asarray(score_map, float)
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    shifted = scores - scores.min() + epsilon
    return shifted / shifted.sum()


def kl_divergence(gold: GoldDistribution, predicted: np.ndarray) -> float:
    """KL(gold || predicted), summed over the gold support."""
    p = np.asarray(predicted, dtype=float)
    if p.shape != gold.weights.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {gold.weights.shape}")
    support = gold.support
    ps = p[support]
    if np.any(ps <= 0):
        raise ValueError("predicted distribution must be strictly positive on the gold support")
    g = gold.weights[support]
    return float(np.sum(g * np.log(g / ps)))


@dataclass(frozen=True)
class RankedList:
    """Item ids ordered by descending score, ties broken by ascending id."""

    items: tuple[str, ...]
    scores: tuple[float, ...]

    def __post_init__(self):
        if len(self.items) != len(self.scores):
            raise ValueError("items and scores must align")
        for a, b in zip(self.scores, self.scores[1:]):
            if b > a:
                raise ValueError("scores must be non-increasing")

    @classmethod
    def from_scores(cls, pairs) -> "RankedList":
        ordered = sorted(pairs, key=lambda p: (-p[1], p[0]))
        return cls(tuple(i for i, _ in ordered), tuple(float(s) for _, s in ordered))

    def top(self, k: int) -> tuple[str, ...]:
        return self.items[:k]


def precision_at_k(ranking: RankedList, relevant: set, k: int) -> float:
    """|top-k intersect relevant| / k; k stays in the denominator even when the
    ranking is shorter than k."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    hits = sum(1 for item in ranking.top(k) if item in relevant)
    return hits / k


def recall_at_k(ranking: RankedList, relevant: set, k: int) -> float:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not relevant:
        raise ValueError("relevant set must be non-empty for recall")
    hits = sum(1 for item in ranking.top(k) if item in relevant)
    return hits / len(relevant)


@dataclass(frozen=True)
class EvalEntry:
    """One object's predicted score map for one (category, view) query."""

    object_id: str
    category: str
    view: str
    score_map: ScoreMap


@dataclass(frozen=True)
class RetrievalQuery:
    """One ranked retrieval result with its relevant item ids."""

    split: str
    label: str
    ranking: RankedList
    relevant: frozenset


@dataclass
class EvaluationReport:
    """Aggregated KL table (category x view) and retrieval table (per split)."""

    kl: dict
    retrieval: dict
    missing: list
    ks: tuple[int, ...]

    def to_json(self) -> str:
        return json.dumps(
            {"kl": self.kl, "retrieval": self.retrieval, "missing": self.missing,
             "ks": list(self.ks)},
            indent=2, sort_keys=True,
        ) + "\n"

    def to_text(self) -> str:
        lines = []
        if self.kl:
            views = sorted({v for row in self.kl.values() for v in row})
            name_w = max(len("category"), *(len(c) for c in self.kl))
            lines.append("KL divergence (gold || predicted), mean per object")
            lines.append(" ".join(["category".ljust(name_w)] + [v.rjust(8) for v in views]))
            for cat in sorted(self.kl):
                row = [cat.ljust(name_w)]
                for v in views:
                    val = self.kl[cat].get(v)
                    row.append(("-" if val is None else f"{val:.4f}").rjust(8))
                lines.append(" ".join(row))
        if self.retrieval:
            if lines:
                lines.append("")
            header = ["split".ljust(8)]
            header += [f"P@{k}".rjust(7) for k in self.ks]
            header += [f"R@{k}".rjust(7) for k in self.ks]
            lines.append("retrieval metrics, mean per query")
            lines.append(" ".join(header))
            for split in sorted(self.retrieval):
                vals = self.retrieval[split]
                row = [split.ljust(8)]
                row += [f"{vals[f'P@{k}']:.3f}".rjust(7) for k in self.ks]
                row += [f"{vals[f'R@{k}']:.3f}".rjust(7) for k in self.ks]
                lines.append(" ".join(row))
        if self.missing:
            lines.append("")
            lines.append("missing entries:")
            lines.extend(f"  {m}" for m in self.missing)
        return "\n".join(lines) + "\n"


def evaluate_model(entries=(), golds=None, retrieval_queries=(), *,
                   expected_cells=None, epsilon: float = DEFAULT_EPSILON,
                   ks: tuple[int, ...] = (1, 5, 10)) -> EvaluationReport:
    """Aggregate per-object KL against gold distributions and retrieval metrics.

    ``golds`` maps view labels to GoldDistributions.  ``expected_cells`` may
    list (category, view) pairs that must be present; absent ones are reported
    in ``missing`` rather than silently skipped.
    """
    golds = golds or {}
    kl_samples: dict[str, dict[str, list[float]]] = {}
    missing: list[str] = []
    for entry in entries:
        gold = golds.get(entry.view)
        if gold is None:
            missing.append(f"no gold distribution for view {entry.view!r}")
            continue
        predicted = normalize_map(entry.score_map, epsilon)
        value = kl_divergence(gold, predicted)
        kl_samples.setdefault(entry.category, {}).setdefault(entry.view, []).append(value)

    if expected_cells:
        for category, view in expected_cells:
            if not kl_samples.get(category, {}).get(view):
                missing.append(f"no score map for ({category}, {view})")

    kl_table = {
        cat: {view: float(np.mean(vals)) for view, vals in row.items()}
        for cat, row in kl_samples.items()
    }

    retrieval_table: dict[str, dict[str, float]] = {}
    by_split: dict[str, list[RetrievalQuery]] = {}
    for rq in retrieval_queries:
        by_split.setdefault(rq.split, []).append(rq)
    for split, qs in by_split.items():
        metrics: dict[str, float] = {}
        for k in ks:
            metrics[f"P@{k}"] = float(np.mean([precision_at_k(q.ranking, q.relevant, k) for q in qs]))
            metrics[f"R@{k}"] = float(np.mean([recall_at_k(q.ranking, q.relevant, k) for q in qs]))
        retrieval_table[split] = metrics

    return EvaluationReport(kl=kl_table, retrieval=retrieval_table, missing=missing, ks=tuple(ks))
