"""Seeded synthetic retrieval instances with one planted hub candidate.

The generator plants a single candidate that sits unusually close to every
query, mimicking the hub vectors that dominate nearest-neighbor lists in
real embedding spaces. Each query is a noisy copy of its true candidate
plus a shared component along a common direction, and the hub candidate is
the normalized mean of the reference queries, which concentrates on that
common direction. Raw inner-product retrieval funnels a large share of
top-1 hits into the hub while the planted truth is always one of the
ordinary candidates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .io import EmbeddingMatrix, GroundTruth, normalize_rows


@dataclass(frozen=True)
class HubBenchmark:
    """A self-contained instance: candidates, two query pools, their truth."""

    candidates: EmbeddingMatrix
    ref_queries: EmbeddingMatrix
    test_queries: EmbeddingMatrix
    ref_truth: GroundTruth
    test_truth: GroundTruth
    hub_index: int


def random_unit_rows(seed: int, rows: int, dim: int) -> EmbeddingMatrix:
    """Rows drawn from a standard Gaussian and scaled to unit norm."""
    rng = np.random.default_rng(seed)
    data = normalize_rows(rng.standard_normal((rows, dim)))
    return EmbeddingMatrix(data.astype(np.float32), normalized=True)


def _query_pool(
    rng: np.random.Generator,
    normals: np.ndarray,
    shared: np.ndarray,
    size: int,
    noise: float,
    common: float,
) -> tuple[EmbeddingMatrix, GroundTruth]:
    labels = rng.integers(0, normals.shape[0], size=size)
    q = (
        normals[labels]
        + noise * rng.standard_normal((size, normals.shape[1]))
        + common * shared
    )
    q = normalize_rows(q).astype(np.float32)
    truth = GroundTruth({i: frozenset({int(labels[i])}) for i in range(size)})
    return EmbeddingMatrix(q, normalized=True), truth


def synthetic_hub_instance(
    seed: int,
    n_candidates: int = 100,
    dim: int = 32,
    n_refs: int = 500,
    n_test: int = 500,
    noise: float = 0.5,
    common: float = 0.9,
) -> HubBenchmark:
    """Build a seeded instance whose last candidate is the planted hub.

    noise scales the per-query Gaussian perturbation; common scales the
    shared component mixed into every query. The hub candidate is the
    normalized mean of the reference queries. Ground truth is always an
    ordinary candidate, never the hub.
    """
    if n_candidates < 2:
        raise ValueError("need at least one ordinary candidate plus the hub")
    if n_refs < 1 or n_test < 1:
        raise ValueError("both query pools need at least one query")
    if noise < 0 or common < 0:
        raise ValueError("noise and common scales must be >= 0")
    rng = np.random.default_rng(seed)
    normals = normalize_rows(rng.standard_normal((n_candidates - 1, dim)))
    shared = normalize_rows(rng.standard_normal((1, dim)))[0]
    ref_queries, ref_truth = _query_pool(
        rng, normals, shared, n_refs, noise, common
    )
    test_queries, test_truth = _query_pool(
        rng, normals, shared, n_test, noise, common
    )
    mean_ref = ref_queries.rows64().mean(axis=0)
    hub = normalize_rows(mean_ref[np.newaxis, :])[0]
    cands = np.vstack([normals, hub[np.newaxis, :]]).astype(np.float32)
    candidates = EmbeddingMatrix(cands, normalized=True)
    return HubBenchmark(
        candidates=candidates,
        ref_queries=ref_queries,
        test_queries=test_queries,
        ref_truth=ref_truth,
        test_truth=test_truth,
        hub_index=n_candidates - 1,
    )
