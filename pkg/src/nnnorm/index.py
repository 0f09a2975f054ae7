"""Exact and inverted-file top-k maximum-inner-product search.

The IVF index partitions base rows by a Lloyd's k-means coarse quantizer
(k-means++ style seeding, deterministic for a fixed seed). A search probes
the nprobe lists whose centroids score highest against the query; probing
every list reproduces exact search hit for hit.

All hit scores come from the order-pinned 64-bit kernel, so results are
independent of batch shape and thread schedule. Ties break by ascending
candidate index everywhere.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._kernel import score_block, top_k_desc, widen_cols, widen_rows
from .errors import DimMismatch, KTooLarge
from .io import EmbeddingMatrix
from .ranking import RankingTable, SearchHit

DEFAULT_NPROBE = 8
DEFAULT_KMEANS_ITERS = 20


class IndexParams(NamedTuple):
    ncentroids: int
    kmeans_iters: int
    seed: int


@dataclass(eq=False)
class VectorIndex:
    """Immutable search structure over a base EmbeddingMatrix."""

    kind: str  # "exact" | "ivf"
    base: EmbeddingMatrix
    centroids: EmbeddingMatrix | None = None
    lists: list[np.ndarray] | None = None
    params: IndexParams | None = None

    @property
    def ncentroids(self) -> int:
        return 0 if self.centroids is None else self.centroids.rows


def build_exact(base: EmbeddingMatrix) -> VectorIndex:
    """Index whose searches enumerate every base row."""
    return VectorIndex(kind="exact", base=base)


def _sq_dists(points64: np.ndarray, centroids64: np.ndarray) -> np.ndarray:
    # Squared L2 distances for the quantizer only; hit scores never flow
    # through this path, so BLAS matmul is fine here.
    p2 = np.einsum("ij,ij->i", points64, points64)
    c2 = np.einsum("ij,ij->i", centroids64, centroids64)
    d2 = p2[:, np.newaxis] - 2.0 * (points64 @ centroids64.T) + c2[np.newaxis, :]
    np.maximum(d2, 0.0, out=d2)
    return d2


def _seed_plus_plus(x64: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ style seeding; returns row indices of the chosen seeds."""
    n = x64.shape[0]
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = int(rng.integers(n))
    d2 = np.sum((x64 - x64[chosen[0]]) ** 2, axis=1)
    taken = np.zeros(n, dtype=bool)
    taken[chosen[0]] = True
    for j in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            # all remaining points coincide with a seed; take the lowest
            # untaken index for determinism
            idx = int(np.flatnonzero(~taken)[0])
        else:
            # inverse-CDF draw, kept explicit for cross-version stability
            cum = np.cumsum(d2)
            idx = int(np.searchsorted(cum, rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        chosen[j] = idx
        taken[idx] = True
        d2 = np.minimum(d2, np.sum((x64 - x64[idx]) ** 2, axis=1))
    return chosen


def kmeans(
    points: EmbeddingMatrix, k: int, iters: int, seed: int
) -> tuple[EmbeddingMatrix, np.ndarray]:
    """Lloyd's algorithm with k-means++ seeding, deterministic per seed.

    Empty clusters are re-seeded to the point currently farthest from its
    assigned centroid (processed in ascending cluster order, each point
    usable once per iteration). iters=0 returns the seeded initial points
    as centroids with nearest-seed assignments.

    Returns
    -------
    (centroids, assignments): float32 centroid matrix and an int64 array
    mapping each point to its centroid.
    """
    n = points.rows
    if k < 1 or k > n:
        raise KTooLarge(f"k={k} outside [1, {n}]")
    x64 = points.rows64()
    rng = np.random.default_rng(seed)
    seeds = _seed_plus_plus(x64, k, rng)
    centroids64 = x64[seeds].copy()

    assign = np.argmin(_sq_dists(x64, centroids64), axis=1)
    for _ in range(iters):
        assign = np.argmin(_sq_dists(x64, centroids64), axis=1)
        counts = np.bincount(assign, minlength=k)
        sums = np.empty((k, x64.shape[1]))
        for t in range(x64.shape[1]):
            sums[:, t] = np.bincount(assign, weights=x64[:, t], minlength=k)
        nonempty = counts > 0
        centroids64[nonempty] = (
            sums[nonempty] / counts[nonempty][:, np.newaxis]
        )
        empty = np.flatnonzero(~nonempty)
        if empty.size:
            dist_own = np.sum((x64 - centroids64[assign]) ** 2, axis=1)
            used = np.zeros(n, dtype=bool)
            for c in empty:
                masked = np.where(used, -np.inf, dist_own)
                far = int(np.argmax(masked))  # ties: lowest index wins
                centroids64[c] = x64[far]
                assign[far] = c
                used[far] = True
    centroids = EmbeddingMatrix(centroids64.astype(np.float32))
    final_assign = np.argmin(_sq_dists(x64, centroids.rows64()), axis=1)
    return centroids, final_assign.astype(np.int64)


def build_ivf(
    base: EmbeddingMatrix,
    ncentroids: int | None = None,
    kmeans_iters: int = DEFAULT_KMEANS_ITERS,
    seed: int = 42,
) -> VectorIndex:
    """Inverted-file index; lists partition the base rows by centroid."""
    if ncentroids is None:
        # ceil(sqrt(rows)) for rows >= 1
        ncentroids = math.isqrt(base.rows - 1) + 1 if base.rows else 1
    if base.rows < ncentroids or ncentroids < 1:
        raise KTooLarge(
            f"ncentroids={ncentroids} outside [1, rows={base.rows}]"
        )
    centroids, assign = kmeans(base, ncentroids, kmeans_iters, seed)
    lists = [
        np.flatnonzero(assign == c).astype(np.int64) for c in range(ncentroids)
    ]
    return VectorIndex(
        kind="ivf",
        base=base,
        centroids=centroids,
        lists=lists,
        params=IndexParams(ncentroids, kmeans_iters, seed),
    )


def _probe_rows(index: VectorIndex, q64: np.ndarray, nprobe: int) -> np.ndarray:
    """Row indices found in the nprobe best-scoring centroid lists."""
    cscores = score_block(q64, index.centroids.cols64())[0]
    cids, _ = top_k_desc(
        cscores, np.arange(index.ncentroids, dtype=np.int64), nprobe
    )
    picked = [index.lists[c] for c in cids]
    if not picked:
        return np.empty(0, dtype=np.int64)
    return np.concatenate(picked)


def search(
    index: VectorIndex, query: np.ndarray, k: int, nprobe: int = DEFAULT_NPROBE
) -> list[SearchHit]:
    """Top-k hits for one query vector, score descending, index-ascending ties."""
    q = np.ascontiguousarray(query, dtype=np.float32).reshape(1, -1)
    if q.shape[1] != index.base.dim:
        raise DimMismatch(
            f"query dim {q.shape[1]} != base dim {index.base.dim}"
        )
    if k < 1:
        raise ValueError("k must be >= 1")
    q64 = widen_rows(q)
    if index.kind == "exact":
        if index.base.rows == 0:
            return []
        scores = score_block(q64, index.base.cols64())[0]
        ids, sel = top_k_desc(
            scores, np.arange(index.base.rows, dtype=np.int64), k
        )
    else:
        if nprobe < 1:
            raise ValueError("nprobe must be >= 1")
        rows = _probe_rows(index, q64, nprobe)
        if rows.size == 0:
            return []
        sub = np.ascontiguousarray(index.base.data[rows])
        scores = score_block(q64, widen_cols(sub))[0]
        ids, sel = top_k_desc(scores, rows, k)
    return [SearchHit(int(c), float(s)) for c, s in zip(ids, sel)]


def batch_search(
    index: VectorIndex,
    queries: EmbeddingMatrix,
    k: int,
    nprobe: int = DEFAULT_NPROBE,
) -> RankingTable:
    """Row i of the result equals search(index, query i, k, nprobe).

    Results are independent of execution order by the kernel's
    accumulation contract, so internal batching is free to vary.
    """
    if queries.dim != index.base.dim:
        raise DimMismatch(
            f"query dim {queries.dim} != base dim {index.base.dim}"
        )
    if k < 1:
        raise ValueError("k must be >= 1")
    nq = queries.rows
    if index.kind == "exact":
        depth = min(k, index.base.rows)
        indices = np.empty((nq, depth), dtype=np.int64)
        scores = np.empty((nq, depth), dtype=np.float64)
        if depth == 0 or nq == 0:
            return RankingTable(indices[:, :0], scores[:, :0])
        ids = np.arange(index.base.rows, dtype=np.int64)
        cols = index.base.cols64()
        q64 = queries.rows64()
        block = max(1, min(nq, int(2e8 / max(1, index.base.rows) / 8)))
        for b0 in range(0, nq, block):
            b1 = min(b0 + block, nq)
            sb = score_block(q64[b0:b1], cols)
            for i in range(b0, b1):
                indices[i], scores[i] = top_k_desc(sb[i - b0], ids, depth)
        return RankingTable(indices, scores)
    # IVF path: depth can vary per query with tiny probe sets, so clamp to
    # the smallest probed row count to keep the table rectangular.
    per_query: list[tuple[np.ndarray, np.ndarray]] = []
    q64 = queries.rows64()
    min_depth = k
    for i in range(nq):
        rows = _probe_rows(index, q64[i : i + 1], nprobe)
        if rows.size == 0:
            per_query.append(
                (np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64))
            )
            min_depth = 0
            continue
        sub = np.ascontiguousarray(index.base.data[rows])
        s = score_block(q64[i : i + 1], widen_cols(sub))[0]
        ids, sel = top_k_desc(s, rows, k)
        per_query.append((ids, sel))
        min_depth = min(min_depth, ids.shape[0])
    depth = 0 if nq == 0 else min_depth
    indices = np.empty((nq, depth), dtype=np.int64)
    scores = np.empty((nq, depth), dtype=np.float64)
    for i, (ids, sel) in enumerate(per_query):
        indices[i] = ids[:depth]
        scores[i] = sel[:depth]
    return RankingTable(indices, scores)
