"""Hubness measurement over top-1 match distributions.

A hub is a candidate that wins the top-1 slot for disproportionately many
queries. The per-candidate count of top-1 wins summarizes this: heavy
tails (high excess kurtosis, high max) mean a few candidates soak up most
matches.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDistribution, IndexOutOfRange, InsufficientData
from .ranking import RankingTable


@dataclass(eq=False)
class MatchedCounts:
    """Per-candidate count of queries whose top-1 hit is that candidate."""

    counts: np.ndarray
    total_queries: int

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)


@dataclass(eq=False)
class HubReport:
    """Outlier statistics of a matched-count distribution.

    kurtosis is Fisher excess over population central moments of the
    counts vector; mae is the mean absolute deviation from the mean count;
    histogram maps count value to the number of candidates with it.
    """

    kurtosis: float
    mae: float
    max: int
    histogram: dict[int, int]

    def to_json_dict(self) -> dict:
        return {
            "kurtosis": self.kurtosis,
            "mae": self.mae,
            "max": self.max,
            "histogram": {str(k): v for k, v in sorted(self.histogram.items())},
        }


def matched_counts(table: RankingTable, n_candidates: int) -> MatchedCounts:
    """Count top-1 wins per candidate across all queries."""
    if table.n_queries and table.depth == 0:
        raise InsufficientData("table has queries but zero depth; no top-1 exists")
    if table.n_queries == 0:
        return MatchedCounts(np.zeros(n_candidates, dtype=np.int64), 0)
    top1 = table.indices[:, 0]
    if top1.size and (top1.min() < 0 or top1.max() >= n_candidates):
        bad = int(top1[(top1 < 0) | (top1 >= n_candidates)][0])
        raise IndexOutOfRange(
            f"top-1 candidate {bad} outside [0, {n_candidates})"
        )
    counts = np.bincount(top1, minlength=n_candidates)
    return MatchedCounts(counts.astype(np.int64), int(table.n_queries))


def hub_report(mc: MatchedCounts) -> HubReport:
    """Excess kurtosis, mean absolute deviation, max, and histogram of counts."""
    counts = mc.counts.astype(np.float64)
    if counts.shape[0] < 2:
        raise DegenerateDistribution("need at least 2 candidates")
    mean = counts.mean()
    dev = counts - mean
    m2 = np.mean(dev**2)
    if m2 == 0.0:
        raise DegenerateDistribution("matched counts have zero variance")
    m4 = np.mean(dev**4)
    kurtosis = m4 / (m2 * m2) - 3.0
    mae = float(np.mean(np.abs(dev)))
    values, freqs = np.unique(mc.counts, return_counts=True)
    histogram = {int(v): int(f) for v, f in zip(values, freqs)}
    return HubReport(float(kurtosis), mae, int(mc.counts.max()), histogram)


def compare_reports(before: HubReport, after: HubReport) -> dict:
    """Per-metric deltas (after minus before) and ratios; no judgment encoded."""
    out: dict = {"delta": {}, "ratio": {}}
    for name in ("kurtosis", "mae", "max"):
        b = getattr(before, name)
        a = getattr(after, name)
        out["delta"][name] = a - b
        out["ratio"][name] = (a / b) if b != 0 else None
    return out
