"""Weighted ECDFs, the two-sample KS agreement gate, and accuracy."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from sim2real.errors import ShapeError, ValidationError

AGREEMENT_THRESHOLD = 0.09
HISTOGRAM_BINS = 50


@dataclass(frozen=True)
class WeightedSample:
    scores: np.ndarray
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64).ravel()
        if scores.size == 0:
            raise ValidationError("sample is empty")
        if not np.all(np.isfinite(scores)):
            raise ValidationError("scores must be finite")
        if self.weights is None:
            weights = np.ones_like(scores)
        else:
            weights = np.asarray(self.weights, dtype=np.float64).ravel()
            if weights.shape != scores.shape:
                raise ShapeError(f"{weights.size} weights for {scores.size} scores")
            if not np.all(np.isfinite(weights)) or np.any(weights < 0):
                raise ValidationError("weights must be finite and non-negative")
        if not weights.sum() > 0:
            raise ValidationError("sample has zero total weight")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "weights", weights)

    @property
    def n(self) -> int:
        return self.scores.size

    @property
    def total(self) -> float:
        return float(self.weights.sum())


def weighted_ecdf(s: WeightedSample, x: float) -> float:
    """Share of total weight on scores <= x."""
    return float(s.weights[s.scores <= x].sum() / s.weights.sum())


def _ecdf_at(s: WeightedSample, points: np.ndarray) -> np.ndarray:
    order = np.argsort(s.scores, kind="stable")
    xs = s.scores[order]
    cum = np.concatenate([[0.0], np.cumsum(s.weights[order])])
    return cum[np.searchsorted(xs, points, side="right")] / cum[-1]


def ks_distance(a: WeightedSample, b: WeightedSample) -> float:
    """sup_x |F_a(x) - F_b(x)|, taken over every distinct score of either sample.

    Both ECDFs are step functions that only change at sample points, so the
    supremum over the merged points is exact.
    """
    points = np.unique(np.concatenate([a.scores, b.scores]))
    return float(np.max(np.abs(_ecdf_at(a, points) - _ecdf_at(b, points))))


@dataclass(frozen=True)
class KSReport:
    statistic: float
    threshold: float
    passed: bool
    n_source: int
    n_target: int

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "threshold": self.threshold,
            "pass": self.passed,
            "n_source": self.n_source,
            "n_target": self.n_target,
        }


def agreement_check(
    model_scores_source: WeightedSample,
    model_scores_target: WeightedSample,
    threshold: float = AGREEMENT_THRESHOLD,
) -> KSReport:
    """KS gate: passes only when the distance is strictly below ``threshold``."""
    stat = ks_distance(model_scores_source, model_scores_target)
    return KSReport(
        statistic=stat,
        threshold=threshold,
        passed=stat < threshold,
        n_source=model_scores_source.n,
        n_target=model_scores_target.n,
    )


def accuracy(probs, labels, cut: float = 0.5) -> float:
    """Fraction of rows where ``probs >= cut`` agrees with the label."""
    probs = np.asarray(probs, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if probs.shape != labels.shape:
        raise ShapeError(f"{probs.size} probabilities for {labels.size} labels")
    return float(np.mean((probs >= cut).astype(np.int64) == labels))


def density_histogram(s: WeightedSample, bins: int = HISTOGRAM_BINS) -> tuple[np.ndarray, np.ndarray]:
    """Weighted histogram on [0, 1] normalized to unit area. Returns (edges, density)."""
    edges = np.linspace(0.0, 1.0, bins + 1)
    counts, _ = np.histogram(np.clip(s.scores, 0.0, 1.0), bins=edges, weights=s.weights)
    density = counts / (counts.sum() * np.diff(edges))
    return edges, density
