"""Recall evaluation, bootstrap intervals, hyperparameter sweep, reference
ablation, and attribute-bias metrics.

Recall@K counts a query as a hit when any of its ground-truth candidates
appears in the top K. Confidence intervals come from a percentile bootstrap
over query resampling. The sweep searches an (alpha, k) grid for the bias
correction by evaluating R@1 on a held-out split drawn from the reference
pool itself, mirroring a train-side holdout protocol.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._kernel import score_block
from .errors import (
    EmptyInput,
    EmptyReferenceSet,
    InsufficientData,
    MissingTruth,
    UnlabeledCandidate,
)
from .index import build_exact
from .io import AttributeLabels, EmbeddingMatrix, GroundTruth
from .normalize import NormalizationSpec, _desc_topk_values, apply
from .ranking import RankingTable

DEFAULT_ALPHA_GRID: tuple[float, ...] = tuple(
    0.25 + 0.125 * i for i in range(11)
)  # 0.25, 0.375, ..., 1.5
DEFAULT_K_GRID: tuple[int, ...] = tuple(2**i for i in range(10))  # 1 .. 512

DEFAULT_BOOTSTRAP_RESAMPLES = 1000
DEFAULT_BOOTSTRAP_LEVEL = 0.95


def recall_at_k(table: RankingTable, truth: GroundTruth, k: int) -> float:
    """Fraction of queries with at least one correct candidate in the top k."""
    if table.n_queries == 0:
        raise EmptyInput("recall over an empty table is undefined")
    if k < 1:
        raise ValueError("k must be >= 1")
    hits = per_query_hits(table, truth, k)
    return float(hits.mean())


def per_query_hits(table: RankingTable, truth: GroundTruth, k: int) -> np.ndarray:
    """Binary hit indicator per query for top-k containment."""
    depth = min(k, table.depth)
    out = np.zeros(table.n_queries, dtype=np.int64)
    for q in range(table.n_queries):
        try:
            correct = truth.mapping[q]
        except KeyError:
            raise MissingTruth(q) from None
        row = table.indices[q, :depth]
        out[q] = int(any(int(c) in correct for c in row))
    return out


def bootstrap_ci(
    per_query_hits_vec: np.ndarray,
    resamples: int = DEFAULT_BOOTSTRAP_RESAMPLES,
    seed: int = 42,
    level: float = DEFAULT_BOOTSTRAP_LEVEL,
) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean of a binary hit sequence.

    Resamples queries with replacement; interval endpoints are the
    (1-level)/2 and 1-(1-level)/2 percentiles of the resampled means,
    widened if needed so the interval always brackets the point estimate.
    """
    hits = np.asarray(per_query_hits_vec, dtype=np.float64).reshape(-1)
    n = hits.shape[0]
    if n == 0:
        raise EmptyInput("bootstrap needs at least one observation")
    if resamples < 1:
        raise ValueError("resamples must be >= 1")
    if not 0 < level < 1:
        raise ValueError("level must be in (0, 1)")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(resamples, n))
    means = hits[idx].mean(axis=1)
    tail = 100.0 * (1.0 - level) / 2.0
    lo, hi = np.percentile(means, [tail, 100.0 - tail])
    point = float(hits.mean())
    return (min(float(lo), point), max(float(hi), point))


@dataclass(eq=False)
class RecallReport:
    """Recall at each requested depth with bootstrap intervals."""

    r_at: dict[int, float]
    ci: dict[int, tuple[float, float]]
    n_queries: int
    method: NormalizationSpec | None = None

    def to_json_dict(self) -> dict:
        method = None
        if self.method is not None:
            method = {
                k: v
                for k, v in (
                    ("method", self.method.method),
                    ("alpha", self.method.alpha),
                    ("k", self.method.k),
                    ("beta1", self.method.beta1),
                    ("beta2", self.method.beta2),
                    ("activation_threshold", self.method.activation_threshold),
                )
                if v is not None
            }
        return {
            "r_at": {str(k): v for k, v in self.r_at.items()},
            "ci": {str(k): list(v) for k, v in self.ci.items()},
            "n_queries": self.n_queries,
            "method": method,
        }


def evaluate(
    table: RankingTable,
    truth: GroundTruth,
    k_list: tuple[int, ...] = (1, 5, 10),
    resamples: int = DEFAULT_BOOTSTRAP_RESAMPLES,
    level: float = DEFAULT_BOOTSTRAP_LEVEL,
    seed: int = 42,
    method: NormalizationSpec | None = None,
) -> RecallReport:
    """Recall@K with bootstrap CIs for each K in k_list."""
    r_at: dict[int, float] = {}
    ci: dict[int, tuple[float, float]] = {}
    for k in k_list:
        hits = per_query_hits(table, truth, k)
        if hits.shape[0] == 0:
            raise EmptyInput("cannot evaluate an empty table")
        r_at[k] = float(hits.mean())
        ci[k] = bootstrap_ci(hits, resamples, seed, level)
    return RecallReport(r_at, ci, table.n_queries, method)


@dataclass(eq=False)
class SweepResult:
    """Full (alpha, k) grid with R@1 on the held-out split, plus the best cell."""

    grid: list[tuple[float, int, float]]
    best: tuple[float, int]
    split_seed: int
    held_out: np.ndarray = field(repr=False, default=None)

    def to_json_dict(self) -> dict:
        return {
            "grid": [[a, k, r] for a, k, r in self.grid],
            "best": list(self.best),
            "split_seed": self.split_seed,
        }


def sweep_nnn(
    queries: EmbeddingMatrix,
    candidates: EmbeddingMatrix,
    ref_queries: EmbeddingMatrix,
    truth: GroundTruth,
    grid_alpha: tuple[float, ...] | None = None,
    grid_k: tuple[int, ...] | None = None,
    split_seed: int = 42,
) -> SweepResult:
    """Evaluate R@1 for every (alpha, k) cell of the bias-correction grid.

    A seeded split the size of the test set is drawn from the reference
    pool, held out as evaluation queries, and excluded from the reference
    set while scoring; `truth` therefore maps reference-pool query indices
    to correct candidates. One split serves every cell. Ties for the best
    cell break toward smaller alpha, then smaller k.
    """
    grid_alpha = tuple(grid_alpha) if grid_alpha else DEFAULT_ALPHA_GRID
    grid_k = tuple(grid_k) if grid_k else DEFAULT_K_GRID
    if min(grid_alpha) < 0:
        raise ValueError("alpha grid values must be >= 0")
    if min(grid_k) < 1:
        raise ValueError("k grid values must be >= 1")
    n_test = queries.rows
    n_pool = ref_queries.rows
    if n_pool < 2 * n_test or n_test == 0:
        raise InsufficientData(
            f"reference pool has {n_pool} rows; needs >= 2x test size {n_test}"
        )
    rng = np.random.default_rng(split_seed)
    perm = rng.permutation(n_pool)
    held_idx = np.sort(perm[:n_test])
    rest_idx = np.sort(perm[n_test:])
    held = EmbeddingMatrix(ref_queries.data[held_idx], ref_queries.normalized)
    rest = EmbeddingMatrix(ref_queries.data[rest_idx], ref_queries.normalized)

    # Top scores against the remaining references, shared across cells:
    # the per-k bias is a prefix mean of each candidate's descending
    # reference scores, identical to a per-cell k-nearest computation.
    kmax = min(max(grid_k), rest.rows)
    tops = np.empty((candidates.rows, kmax), dtype=np.float64)
    cols = rest.cols64()
    c64 = candidates.rows64()
    block = max(1, min(candidates.rows, int(2e8 / max(1, rest.rows) / 8)))
    for b0 in range(0, candidates.rows, block):
        b1 = min(b0 + block, candidates.rows)
        tops[b0:b1] = _desc_topk_values(score_block(c64[b0:b1], cols), kmax)
    prefix = np.cumsum(tops, axis=1)

    raw = score_block(held.rows64(), candidates.cols64())
    correct_sets = []
    for pool_q in held_idx:
        try:
            correct_sets.append(truth.mapping[int(pool_q)])
        except KeyError:
            raise MissingTruth(int(pool_q)) from None

    grid: list[tuple[float, int, float]] = []
    for alpha in grid_alpha:
        for k in grid_k:
            kp = min(k, kmax)
            # round through float32 exactly like a stored bias vector
            b32 = (alpha * (prefix[:, kp - 1] / kp)).astype(np.float32)
            bias = b32.astype(np.float64)
            top1 = np.argmax(raw - bias[np.newaxis, :], axis=1)
            r1 = float(
                np.mean(
                    [int(t) in s for t, s in zip(top1, correct_sets)]
                )
            )
            grid.append((float(alpha), int(k), r1))
    best = min(grid, key=lambda cell: (-cell[2], cell[0], cell[1]))
    return SweepResult(grid, (best[0], best[1]), split_seed, held_idx)


def ablate_reference(
    queries: EmbeddingMatrix,
    candidates: EmbeddingMatrix,
    ref_queries: EmbeddingMatrix,
    truth: GroundTruth,
    fractions: tuple[float, ...],
    spec: NormalizationSpec,
    seed: int = 42,
) -> list[dict]:
    """R@1 per reference-pool fraction, subsets nested for variance control.

    One seeded permutation is drawn; fraction f uses its first
    floor(f * pool) entries, so smaller fractions are subsets of larger
    ones.
    """
    n = ref_queries.rows
    if n == 0:
        raise EmptyReferenceSet("cannot ablate an empty reference pool")
    for f in fractions:
        if not 0 < f <= 1:
            raise ValueError("fractions must lie in (0, 1]")
    perm = np.random.default_rng(seed).permutation(n)
    out: list[dict] = []
    for f in fractions:
        m = int(f * n + 1e-9)
        if m == 0:
            raise EmptyReferenceSet(
                f"fraction {f} of {n} reference queries is empty"
            )
        subset = EmbeddingMatrix(
            ref_queries.data[np.sort(perm[:m])], ref_queries.normalized
        )
        table = apply(spec, queries, candidates, ref_queries=subset, depth=1)
        out.append(
            {
                "fraction": float(f),
                "n_refs": int(m),
                "r_at_1": recall_at_k(table, truth, 1),
            }
        )
    return out


def _top_n_labeled(table: RankingTable, labels: AttributeLabels, n: int):
    if n < 1:
        raise ValueError("n must be >= 1")
    if table.depth < n:
        raise InsufficientData(
            f"table depth {table.depth} is smaller than n={n}"
        )
    for q in range(table.n_queries):
        row = [int(c) for c in table.indices[q, :n]]
        for c in row:
            if c not in labels.attribute:
                raise UnlabeledCandidate(c)
        yield q, row


def attribute_bias(
    table: RankingTable,
    labels: AttributeLabels,
    n: int,
    query_groups: dict[int, str] | None = None,
) -> dict:
    """Mean (count_A - count_B)/n over each query's top n, grouped.

    With query_groups (query index -> group tag) the report breaks means
    out per group; otherwise everything lands in one group "all".
    """
    per_group: dict[str, list[float]] = {}
    all_vals: list[float] = []
    for q, row in _top_n_labeled(table, labels, n):
        a = sum(1 for c in row if labels.attribute[c] == "A")
        b = n - a
        value = (a - b) / n
        all_vals.append(value)
        if query_groups is None:
            group = "all"
        else:
            if q not in query_groups:
                raise ValueError(f"query {q} has no group tag")
            group = query_groups[q]
        per_group.setdefault(group, []).append(value)
    if not all_vals:
        raise EmptyInput("attribute bias over an empty table is undefined")
    return {
        "mean_bias": float(np.mean(all_vals)),
        "per_group": {
            g: float(np.mean(v)) for g, v in sorted(per_group.items())
        },
        "n": int(n),
        "n_queries": len(all_vals),
    }


def attribute_precision(
    table: RankingTable,
    labels: AttributeLabels,
    query_groups: dict[int, str],
    n: int,
) -> float:
    """Mean fraction of each query's top n whose group matches the query's."""
    if table.n_queries == 0:
        raise EmptyInput("precision over an empty table is undefined")
    totals: list[float] = []
    for q, row in _top_n_labeled(table, labels, n):
        if q not in query_groups:
            raise ValueError(f"query {q} has no group tag")
        want = query_groups[q]
        for c in row:
            if c not in labels.group:
                raise UnlabeledCandidate(c, "no group tag")
        totals.append(sum(1 for c in row if labels.group[c] == want) / n)
    return float(np.mean(totals))
