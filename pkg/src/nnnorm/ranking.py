"""Ranked retrieval results shared by the index, scoring, and evaluation layers."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class SearchHit(NamedTuple):
    """One retrieved candidate with its 64-bit inner-product score."""

    candidate: int
    score: float


@dataclass(eq=False)
class RankingTable:
    """Per-query ordered candidates with scores, uniform retrieval depth.

    indices : (n_queries, depth) int64
    scores : (n_queries, depth) float64

    Rows are ordered by score descending; ties broken by ascending
    candidate index; no duplicate candidate within a row.
    """

    indices: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.indices.ndim != 2 or self.scores.shape != self.indices.shape:
            raise ValueError("indices and scores must be 2-D with equal shape")

    @property
    def n_queries(self) -> int:
        return self.indices.shape[0]

    @property
    def depth(self) -> int:
        return self.indices.shape[1]

    def hits(self, query: int) -> list[SearchHit]:
        return [
            SearchHit(int(c), float(s))
            for c, s in zip(self.indices[query], self.scores[query])
        ]

    def validate(self) -> None:
        """Check ordering, tie-break, and duplicate-free invariants."""
        for q in range(self.n_queries):
            row_s = self.scores[q]
            row_i = self.indices[q]
            if np.any(np.diff(row_s) > 0):
                raise ValueError(f"query {q}: scores increase within row")
            for j in range(1, self.depth):
                if row_s[j] == row_s[j - 1] and row_i[j] <= row_i[j - 1]:
                    raise ValueError(f"query {q}: tie-break order violated")
            if len(set(row_i.tolist())) != self.depth:
                raise ValueError(f"query {q}: duplicate candidate")


def tables_equal(a: RankingTable, b: RankingTable) -> bool:
    """Exact (bit-level) equality of two tables."""
    return (
        a.indices.shape == b.indices.shape
        and np.array_equal(a.indices, b.indices)
        and np.array_equal(a.scores, b.scores)
    )
