"""Low-level numeric kernels with pinned accumulation order.

Every inner-product score in this package is accumulated in 64-bit floats
over 32-bit inputs, strictly in ascending dimension order per
(query, candidate) pair. That makes results independent of batch shape and
thread schedule, and lets tests compare against a scalar reference loop
bit for bit.

The hot path is a numba-jitted loop (strict IEEE semantics, no fastmath).
A pure-numpy fallback with the identical accumulation order keeps the
package functional when numba is unavailable; both paths produce the same
bits by construction.
"""
from __future__ import annotations

import os
import warnings

import numpy as np

try:  # pragma: no cover - exercised implicitly by every test run
    import numba
    from numba import njit, prange
    from numba.core.errors import NumbaWarning

    # harmless on hosts whose TBB is too old; numba falls back to another
    # threading layer
    warnings.filterwarnings("ignore", category=NumbaWarning, message=".*TBB.*")
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False


def worker_count() -> int:
    """Worker cap from the NNN_THREADS environment variable (0 = auto)."""
    raw = os.environ.get("NNN_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        n = os.cpu_count() or 1
    return n


if HAVE_NUMBA:

    @njit(cache=True, parallel=True)
    def _score_block_jit(q, ct, out):  # pragma: no cover - compiled
        m, d = q.shape
        n = ct.shape[1]
        tile = 4096
        for i in prange(m):
            for j0 in range(0, n, tile):
                j1 = min(j0 + tile, n)
                w = j1 - j0
                acc = np.zeros(w)
                for t in range(d):
                    qt = q[i, t]
                    row = ct[t, j0:j1]
                    for jj in range(w):
                        acc[jj] += qt * row[jj]
                out[i, j0:j1] = acc

    @njit(cache=True)
    def _fnv1a_jit(data):  # pragma: no cover - compiled
        h = np.uint64(0xCBF29CE484222325)
        prime = np.uint64(0x100000001B3)
        for i in range(data.shape[0]):
            h = (h ^ np.uint64(data[i])) * prime
        return h

    def _apply_thread_cap() -> None:
        # numba's pool size is fixed at first parallel call; cap it to the
        # configured worker count when possible.
        try:
            cap = min(worker_count(), numba.config.NUMBA_NUM_THREADS)
            numba.set_num_threads(max(1, cap))
        except Exception:
            pass

else:  # pragma: no cover

    def _apply_thread_cap() -> None:
        pass


def _score_block_numpy(q: np.ndarray, ct: np.ndarray, out: np.ndarray) -> None:
    """Fallback with the same per-pair ascending-dimension accumulation."""
    out[:] = 0.0
    for t in range(q.shape[1]):
        out += q[:, t, np.newaxis] * ct[t, np.newaxis, :]


def score_block(q64: np.ndarray, ct64: np.ndarray) -> np.ndarray:
    """Inner-product scores between query rows and candidate columns.

    Parameters
    ----------
    q64 : (m, d) float64, C-contiguous
        Query rows, already widened from float32.
    ct64 : (d, n) float64, C-contiguous
        Candidate matrix transposed, already widened from float32.

    Returns
    -------
    (m, n) float64 score matrix. out[i, j] equals the scalar loop
    ``s = 0.0; for t in range(d): s += q64[i, t] * ct64[t, j]`` bit-exactly.
    """
    m = q64.shape[0]
    n = ct64.shape[1]
    out = np.empty((m, n), dtype=np.float64)
    if m == 0 or n == 0:
        return out
    if HAVE_NUMBA:
        _apply_thread_cap()
        _score_block_jit(q64, ct64, out)
    else:
        _score_block_numpy(q64, ct64, out)
    return out


def widen_rows(data32: np.ndarray) -> np.ndarray:
    """float32 rows -> C-contiguous float64 rows (exact widening)."""
    return np.ascontiguousarray(data32, dtype=np.float64)


def widen_cols(data32: np.ndarray) -> np.ndarray:
    """float32 rows -> C-contiguous float64 transpose, for score_block."""
    return np.ascontiguousarray(data32.astype(np.float64).T)


FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


def fnv1a64(payload: bytes | memoryview | np.ndarray) -> int:
    """FNV-1a 64-bit digest of a byte sequence."""
    buf = np.frombuffer(payload, dtype=np.uint8) if not isinstance(
        payload, np.ndarray
    ) else payload
    if HAVE_NUMBA:
        return int(_fnv1a_jit(buf))
    h = FNV_OFFSET
    for b in buf.tobytes():
        h = ((h ^ b) * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def top_k_desc(scores: np.ndarray, ids: np.ndarray, k: int):
    """Top-k selection by (score descending, id ascending).

    Parameters
    ----------
    scores : (n,) float64
    ids : (n,) int64
        Global ids paired with the scores; ties at equal score are broken
        by ascending id.
    k : int
        Number of hits wanted; clamped to n.

    Returns
    -------
    (sel_ids, sel_scores) both length min(k, n), ordered by the rule above.
    """
    n = scores.shape[0]
    k = min(int(k), n)
    if k <= 0:
        return ids[:0], scores[:0]
    if k >= n or n <= 256:
        order = np.lexsort((ids, -scores))[:k]
        return ids[order], scores[order]
    # Partial selection. argpartition picks an arbitrary subset among ties
    # at the k-th score, so rebuild the boundary group deterministically.
    part = np.argpartition(scores, n - k)[n - k:]
    thr = scores[part].min()
    sure = np.flatnonzero(scores > thr)
    if sure.size >= k:  # possible only through float equality quirks
        order = np.lexsort((ids[sure], -scores[sure]))[:k]
        sel = sure[order]
        return ids[sel], scores[sel]
    tied = np.flatnonzero(scores == thr)
    tied = tied[np.argsort(ids[tied], kind="stable")][: k - sure.size]
    sel = np.concatenate([sure, tied])
    order = np.lexsort((ids[sel], -scores[sel]))
    sel = sel[order]
    return ids[sel], scores[sel]
