"""Nearest-neighbor bias estimation, debiased scoring, and the softmax and
mean-subtraction baselines.

The central quantity is a per-candidate additive bias: alpha times the mean
inner product between the candidate and its k highest-scoring reference
queries. Subtracting it from raw scores demotes candidates that score high
against everything (hubs). The same correction can ride inside any
inner-product index by appending the bias to each candidate vector and -1
to each query vector; both routes produce identical tables and tests hold
them to bit equality.

Softmax baselines normalize each candidate's score by reference-bank
partition sums (factors over a reference-candidate bank and a
reference-query bank). Exponent sums are stabilized by per-candidate max
subtraction so temperature values in the hundreds do not overflow.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernel import score_block, top_k_desc, widen_cols, widen_rows
from .errors import (
    DimMismatch,
    EmptyReferenceSet,
    LengthMismatch,
    MissingReference,
)
from .index import (
    DEFAULT_NPROBE,
    VectorIndex,
    batch_search,
    build_exact,
    build_ivf,
)
from .io import BiasVector, EmbeddingMatrix, fingerprint
from .ranking import RankingTable

METHODS = ("none", "nnn", "dn", "qbnorm", "dualis", "dualdis")


@dataclass(frozen=True)
class NormalizationSpec:
    """Tagged method descriptor; parameters present iff the method needs them.

    method one of: none | nnn | dn | qbnorm | dualis | dualdis.
    nnn takes (alpha, k); qbnorm takes beta2 (beta1 pinned to 0); dualis
    takes (beta1, beta2); dualdis additionally takes activation_threshold
    (defaults to 1).
    """

    method: str
    alpha: float | None = None
    k: int | None = None
    beta1: float | None = None
    beta2: float | None = None
    activation_threshold: int | None = None

    def __post_init__(self):
        m = self.method
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}")
        need = {
            "none": (),
            "nnn": ("alpha", "k"),
            "dn": (),
            "qbnorm": ("beta2",),
            "dualis": ("beta1", "beta2"),
            "dualdis": ("beta1", "beta2"),
        }[m]
        for name in need:
            if getattr(self, name) is None:
                raise ValueError(f"method {m!r} requires {name}")
        allowed = set(need)
        if m == "qbnorm":
            if self.beta1 not in (None, 0, 0.0):
                raise ValueError("qbnorm pins beta1 to 0")
            allowed.add("beta1")
        if m == "dualdis":
            allowed.add("activation_threshold")
            if self.activation_threshold is None:
                object.__setattr__(self, "activation_threshold", 1)
            if self.activation_threshold < 1:
                raise ValueError("activation_threshold must be >= 1")
        for name in ("alpha", "k", "beta1", "beta2", "activation_threshold"):
            if name not in allowed and getattr(self, name) is not None:
                raise ValueError(f"method {m!r} does not take {name}")
        if self.alpha is not None and self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.k is not None and self.k < 1:
            raise ValueError("k must be >= 1")
        for b in ("beta1", "beta2"):
            v = getattr(self, b)
            if v is not None and v < 0:
                raise ValueError(f"{b} must be >= 0")


def _desc_topk_values(scores: np.ndarray, k: int) -> np.ndarray:
    """Per-row k largest values, descending. scores is (m, n), k <= n."""
    n = scores.shape[1]
    if k >= n:
        top = np.sort(scores, axis=1)[:, ::-1]
    else:
        top = np.partition(scores, n - k, axis=1)[:, n - k:]
        top = np.sort(top, axis=1)[:, ::-1]
    return top


def _ivf_topk_means(
    candidates: EmbeddingMatrix,
    index: VectorIndex,
    kp: int,
    nprobe: int,
) -> tuple[np.ndarray, bool]:
    """Mean of each candidate's kp best probed reference scores.

    Produces bit-identical means to running a per-candidate index search
    and averaging its hits: probe selection matches the search tie rule,
    the kp best values of a union equal the kp best of each part's kp
    best, and the mean is accumulated over values in descending order.
    Work is batched list-major so the scoring kernel sees large blocks.

    Returns (means, short) where short flags any candidate whose probes
    held fewer than kp reference rows (its mean is over what was found,
    zero when nothing was).
    """
    nc = candidates.rows
    ncent = index.ncentroids
    nprobe = min(nprobe, ncent)
    means = np.zeros(nc, dtype=np.float64)
    if nc == 0:
        return means, False
    c64 = candidates.rows64()

    # probe the same lists a per-candidate search would
    probe = np.empty((nc, nprobe), dtype=np.int64)
    cids = np.arange(ncent, dtype=np.int64)
    cent_cols = index.centroids.cols64()
    block = max(1, min(nc, int(2e8 / max(1, ncent) / 8)))
    for b0 in range(0, nc, block):
        b1 = min(b0 + block, nc)
        cs = score_block(c64[b0:b1], cent_cols)
        for i in range(b0, b1):
            probe[i], _ = top_k_desc(cs[i - b0], cids, nprobe)

    list_sizes = np.array([rows.size for rows in index.lists], dtype=np.int64)
    found = list_sizes[probe].sum(axis=1)
    short = bool(np.any(found < kp))

    # invert to candidate groups per list, then score list-major
    flat = probe.ravel()
    order = np.argsort(flat, kind="stable")
    bounds = np.searchsorted(flat[order], np.arange(ncent + 1))
    cand_of = order // nprobe
    slot_of = order % nprobe
    buf = np.full((nc, nprobe, kp), -np.inf, dtype=np.float64)
    base32 = index.base.data
    for cent in range(ncent):
        lo, hi = bounds[cent], bounds[cent + 1]
        rows = index.lists[cent]
        if lo == hi or rows.size == 0:
            continue
        members = cand_of[lo:hi]
        slots = slot_of[lo:hi]
        cols = widen_cols(base32[rows])
        sub = score_block(c64[members], cols)
        t = min(kp, rows.size)
        top = np.partition(sub, rows.size - t, axis=1)[:, rows.size - t:]
        buf[members, slots, :t] = top

    top = np.sort(buf.reshape(nc, nprobe * kp), axis=1)[:, ::-1][:, :kp]
    counts = np.minimum(found, kp)
    has = counts > 0
    sums = np.cumsum(np.where(np.isfinite(top), top, 0.0), axis=1)
    idx = np.flatnonzero(has)
    means[idx] = sums[idx, counts[idx] - 1] / counts[idx]
    return means, short


def compute_bias(
    candidates: EmbeddingMatrix,
    ref_queries: EmbeddingMatrix,
    alpha: float,
    k: int,
    index_over_ref: VectorIndex | None = None,
    nprobe: int = DEFAULT_NPROBE,
) -> BiasVector:
    """Per-candidate bias: alpha times the mean of the k best reference scores.

    k is clamped to the reference count (a warning lands in the result's
    metadata). With an exact reference index the result is the exact
    k-nearest mean; an inverted-file index trades exactness for speed and
    averages whatever its probes return.

    Means are accumulated in 64-bit in score-descending hit order; values
    are stored at 32-bit.
    """
    if ref_queries.rows == 0:
        raise EmptyReferenceSet("bias needs at least one reference query")
    if candidates.dim != ref_queries.dim:
        raise DimMismatch(
            f"candidate dim {candidates.dim} != reference dim {ref_queries.dim}"
        )
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    if k < 1:
        raise ValueError("k must be >= 1")
    index = index_over_ref if index_over_ref is not None else build_exact(ref_queries)
    if index.base.dim != candidates.dim:
        raise DimMismatch("index base dim differs from candidate dim")
    warnings: tuple[str, ...] = ()
    kprime = min(k, ref_queries.rows)
    if kprime < k:
        warnings = (f"k clamped from {k} to {kprime} (reference count)",)
    nc = candidates.rows
    means = np.empty(nc, dtype=np.float64)
    if index.kind == "exact":
        cols = index.base.cols64()
        c64 = candidates.rows64()
        block = max(1, min(nc, int(2e8 / max(1, ref_queries.rows) / 8)))
        for b0 in range(0, nc, block):
            b1 = min(b0 + block, nc)
            s = score_block(c64[b0:b1], cols)
            top = _desc_topk_values(s, kprime)
            means[b0:b1] = np.cumsum(top, axis=1)[:, kprime - 1] / kprime
    else:
        means, short = _ivf_topk_means(candidates, index, kprime, nprobe)
        if short:
            warnings = warnings + (
                "index probes returned fewer than k reference hits for "
                "some candidates",
            )
    values = (alpha * means).astype(np.float32)
    return BiasVector(values, alpha, k, fingerprint(ref_queries), warnings)


def debias_scores(scores: np.ndarray, bias: BiasVector) -> np.ndarray:
    """out[i] = scores[i] - bias.values[i], in 64-bit floats."""
    s = np.asarray(scores, dtype=np.float64)
    if s.shape[-1] != bias.values.shape[0]:
        raise LengthMismatch(
            f"{s.shape[-1]} scores vs {bias.values.shape[0]} bias values"
        )
    return s - bias.values.astype(np.float64)


def augment_candidates(
    candidates: EmbeddingMatrix, bias: BiasVector
) -> EmbeddingMatrix:
    """Append each candidate's bias value as one extra dimension."""
    if candidates.rows != bias.values.shape[0]:
        raise LengthMismatch(
            f"{candidates.rows} candidates vs {bias.values.shape[0]} bias values"
        )
    data = np.concatenate(
        [candidates.data, bias.values[:, np.newaxis]], axis=1
    )
    return EmbeddingMatrix(data, normalized=False)


def augment_query(q: np.ndarray) -> np.ndarray:
    """Append -1 so q'._r' = q.r - b(r) against augmented candidates."""
    q32 = np.asarray(q, dtype=np.float32).reshape(-1)
    return np.append(q32, np.float32(-1.0))


def _augment_query_matrix(queries: EmbeddingMatrix) -> EmbeddingMatrix:
    col = np.full((queries.rows, 1), -1.0, dtype=np.float32)
    return EmbeddingMatrix(
        np.concatenate([queries.data, col], axis=1), normalized=False
    )


def dn_transform(
    queries: EmbeddingMatrix,
    candidates: EmbeddingMatrix,
    ref_queries: EmbeddingMatrix,
    ref_candidates: EmbeddingMatrix,
) -> tuple[EmbeddingMatrix, EmbeddingMatrix]:
    """Subtract the mean reference embedding from each side.

    queries lose the reference-query mean; candidates lose the
    reference-candidate mean. Means are accumulated in 64-bit.
    """
    if ref_queries.rows == 0 or ref_candidates.rows == 0:
        raise EmptyReferenceSet("both reference sets must be non-empty")
    for m in (candidates, ref_queries, ref_candidates):
        if m.dim != queries.dim:
            raise DimMismatch("all four matrices must share one dim")
    qmean = ref_queries.rows64().mean(axis=0)
    cmean = ref_candidates.rows64().mean(axis=0)
    q_out = (queries.rows64() - qmean).astype(np.float32)
    c_out = (candidates.rows64() - cmean).astype(np.float32)
    return EmbeddingMatrix(q_out), EmbeddingMatrix(c_out)


def _log_denominators(
    candidates: EmbeddingMatrix, bank: EmbeddingMatrix, beta: float
) -> np.ndarray:
    """Per-candidate log of the bank partition sum, max-stabilized.

    Returns log(sum over bank rows of exp(beta * s(bank_row, candidate))).
    """
    s = score_block(bank.rows64(), candidates.cols64())
    e = beta * s
    m = e.max(axis=0)
    return m + np.log(np.sum(np.exp(e - m), axis=0))


def _check_softmax_inputs(query, candidates, banks):
    q = np.asarray(query, dtype=np.float32).reshape(-1)
    if q.shape[0] != candidates.dim:
        raise DimMismatch("query dim differs from candidate dim")
    for bank in banks:
        if bank.rows == 0:
            raise EmptyReferenceSet("softmax reference bank is empty")
        if bank.dim != candidates.dim:
            raise DimMismatch("reference bank dim differs from candidate dim")
    return q


def dualis_scores(
    query: np.ndarray,
    candidates: EmbeddingMatrix,
    ref_queries: EmbeddingMatrix,
    ref_candidates: EmbeddingMatrix,
    beta1: float,
    beta2: float,
) -> np.ndarray:
    """Product of two softmax factors per candidate.

    Factor one normalizes by a reference-candidate bank at temperature
    beta1, factor two by a reference-query bank at temperature beta2.
    Stabilized in the log domain; connects exactly to the naive formula in
    exact arithmetic.
    """
    if beta1 < 0 or beta2 < 0:
        raise ValueError("beta values must be >= 0")
    q = _check_softmax_inputs(query, candidates, (ref_candidates, ref_queries))
    s = score_block(widen_rows(q.reshape(1, -1)), candidates.cols64())[0]
    lse2 = _log_denominators(candidates, ref_queries, beta2)
    with np.errstate(over="ignore"):
        if beta1 == 0.0:
            # the first factor degenerates to the constant 1/|bank|;
            # applying it outside the exp keeps the saturation points
            # (inf/0) aligned with the single-factor normalizer
            return np.exp(beta2 * s - lse2) / ref_candidates.rows
        lse1 = _log_denominators(candidates, ref_candidates, beta1)
        # one exp over the summed log factors: avoids 0 * inf when the
        # two factors saturate in opposite directions; ratios past
        # float64 range still saturate to inf (ties then break by
        # candidate index)
        return np.exp((beta1 * s - lse1) + (beta2 * s - lse2))


def qbnorm_scores(
    query: np.ndarray,
    candidates: EmbeddingMatrix,
    ref_queries: EmbeddingMatrix,
    beta2: float,
) -> np.ndarray:
    """Single softmax factor over the reference-query bank.

    Identical ranking to dualis_scores with beta1=0 (there the first
    factor is the constant 1/bank-size and cannot reorder candidates).
    """
    if beta2 < 0:
        raise ValueError("beta2 must be >= 0")
    q = _check_softmax_inputs(query, candidates, (ref_queries,))
    s = score_block(widen_rows(q.reshape(1, -1)), candidates.cols64())[0]
    lse2 = _log_denominators(candidates, ref_queries, beta2)
    with np.errstate(over="ignore"):
        return np.exp(beta2 * s - lse2)


def dualdis_scores(
    query: np.ndarray,
    candidates: EmbeddingMatrix,
    ref_queries: EmbeddingMatrix,
    ref_candidates: EmbeddingMatrix,
    beta1: float,
    beta2: float,
    activation: frozenset[int] | set[int],
) -> np.ndarray:
    """Softmax scores when the raw top-1 looks like a hub, else raw scores."""
    q = _check_softmax_inputs(query, candidates, (ref_candidates, ref_queries))
    raw = score_block(widen_rows(q.reshape(1, -1)), candidates.cols64())[0]
    if raw.shape[0] and int(np.argmax(raw)) in activation:
        return dualis_scores(
            query, candidates, ref_queries, ref_candidates, beta1, beta2
        )
    return raw


def build_activation_set(
    candidates: EmbeddingMatrix,
    ref_queries: EmbeddingMatrix,
    threshold: int,
    index: VectorIndex | None = None,
    nprobe: int = DEFAULT_NPROBE,
) -> frozenset[int]:
    """Candidates that are the raw top-1 hit of >= threshold reference queries."""
    if threshold < 1:
        raise ValueError("threshold must be >= 1")
    if ref_queries.rows == 0:
        raise EmptyReferenceSet("activation set needs reference queries")
    idx = index if index is not None else build_exact(candidates)
    table = batch_search(idx, ref_queries, 1, nprobe)
    if table.depth == 0:
        return frozenset()
    counts = np.bincount(table.indices[:, 0], minlength=candidates.rows)
    return frozenset(int(c) for c in np.flatnonzero(counts >= threshold))


def _dense_table(
    queries: EmbeddingMatrix,
    candidates: EmbeddingMatrix,
    depth: int,
    transform,
) -> RankingTable:
    """Rank all candidates for each query from transformed raw score rows.

    transform(block) maps an (m, n_candidates) float64 raw-score block to
    the method's score rows; identity for raw ranking.
    """
    nq = queries.rows
    nc = candidates.rows
    depth = min(depth, nc)
    indices = np.empty((nq, depth), dtype=np.int64)
    scores = np.empty((nq, depth), dtype=np.float64)
    if nq == 0 or depth == 0:
        return RankingTable(indices[:, :depth], scores[:, :depth])
    ids = np.arange(nc, dtype=np.int64)
    q64 = queries.rows64()
    cols = candidates.cols64()
    block = max(1, min(nq, int(2e8 / max(1, nc) / 8)))
    for b0 in range(0, nq, block):
        b1 = min(b0 + block, nq)
        rows = transform(score_block(q64[b0:b1], cols))
        for i in range(b0, b1):
            indices[i], scores[i] = top_k_desc(rows[i - b0], ids, depth)
    return RankingTable(indices, scores)


def apply(
    spec: NormalizationSpec,
    queries: EmbeddingMatrix,
    candidates: EmbeddingMatrix,
    ref_queries: EmbeddingMatrix | None = None,
    ref_candidates: EmbeddingMatrix | None = None,
    index: VectorIndex | None = None,
    *,
    depth: int = 10,
    nprobe: int = DEFAULT_NPROBE,
    augmented: bool = False,
    bias: BiasVector | None = None,
    ref_index: VectorIndex | None = None,
    ref_nprobe: int = DEFAULT_NPROBE,
) -> RankingTable:
    """Rank candidates for every query under the chosen method.

    index is the candidate-side ranking index (exact by default). For the
    bias method, an inverted-file candidate index or augmented=True routes
    retrieval through bias-augmented embeddings; with an exact index the
    default is direct score debiasing. Both routes produce identical
    tables. ref_index and ref_nprobe control the reference-side
    k-nearest-queries lookup (exact by default).
    """
    if queries.dim != candidates.dim:
        raise DimMismatch("query dim differs from candidate dim")
    m = spec.method

    if m == "none":
        idx = index if index is not None else build_exact(candidates)
        return batch_search(idx, queries, depth, nprobe)

    if m == "nnn":
        if ref_queries is None and bias is None:
            raise MissingReference("nnn", "ref_queries (or a precomputed bias)")
        if bias is None:
            bias = compute_bias(
                candidates,
                ref_queries,
                spec.alpha,
                spec.k,
                ref_index if ref_index is not None else build_exact(ref_queries),
                ref_nprobe,
            )
        if bias.values.shape[0] != candidates.rows:
            raise LengthMismatch(
                f"{bias.values.shape[0]} bias values vs {candidates.rows} candidates"
            )
        idx = index if index is not None else build_exact(candidates)
        if idx.kind == "exact" and not augmented:
            b64 = bias.values.astype(np.float64)
            return _dense_table(
                queries, candidates, depth, lambda s: s - b64[np.newaxis, :]
            )
        aug_c = augment_candidates(candidates, bias)
        aug_q = _augment_query_matrix(queries)
        if idx.kind == "exact":
            aug_idx = build_exact(aug_c)
        else:
            aug_idx = build_ivf(
                aug_c, idx.params.ncentroids, idx.params.kmeans_iters,
                idx.params.seed,
            )
        return batch_search(aug_idx, aug_q, depth, nprobe)

    if m == "dn":
        if ref_queries is None or ref_candidates is None:
            raise MissingReference("dn", "ref_queries and ref_candidates")
        tq, tc = dn_transform(queries, candidates, ref_queries, ref_candidates)
        return _dense_table(tq, tc, depth, lambda s: s)

    if m == "qbnorm":
        if ref_queries is None:
            raise MissingReference("qbnorm", "ref_queries")
        if ref_queries.rows == 0:
            raise EmptyReferenceSet("qbnorm reference bank is empty")
        lse2 = _log_denominators(candidates, ref_queries, spec.beta2)
        b2 = spec.beta2
        return _dense_table(
            queries, candidates, depth,
            lambda s: np.exp(b2 * s - lse2[np.newaxis, :]),
        )

    if m in ("dualis", "dualdis"):
        if ref_queries is None or ref_candidates is None:
            raise MissingReference(m, "ref_queries and ref_candidates")
        if ref_queries.rows == 0 or ref_candidates.rows == 0:
            raise EmptyReferenceSet("softmax reference bank is empty")
        lse1 = _log_denominators(candidates, ref_candidates, spec.beta1)
        lse2 = _log_denominators(candidates, ref_queries, spec.beta2)
        b1, b2 = spec.beta1, spec.beta2

        def softmax_rows(s):
            return np.exp(b1 * s - lse1[np.newaxis, :]) * np.exp(
                b2 * s - lse2[np.newaxis, :]
            )

        if m == "dualis":
            return _dense_table(queries, candidates, depth, softmax_rows)

        activation = build_activation_set(
            candidates,
            ref_queries,
            spec.activation_threshold,
            index if index is not None else build_exact(candidates),
            nprobe,
        )

        def dualdis_rows(s):
            out = softmax_rows(s)
            if s.shape[1]:
                top1 = np.argmax(s, axis=1)
                keep_raw = np.array(
                    [int(t) not in activation for t in top1], dtype=bool
                )
                out[keep_raw] = s[keep_raw]
            return out

        return _dense_table(queries, candidates, depth, dualdis_rows)

    raise ValueError(f"unknown method {m!r}")
