"""Bit-exact loading, saving, and fingerprinting of embedding data.

Binary formats (all integers and floats little-endian):

EMB1 matrix file, fixed 24-byte header then payload:
    magic "EMB1" | u32 version=1 | u32 rows | u32 dim |
    u8 dtype=1 (f32) | u8 normalized (0/1) | 6 zero pad bytes |
    row-major f32 payload (rows * dim * 4 bytes)

BIA1 bias file, fixed 36-byte header then payload:
    magic "BIA1" | u32 version=1 | u32 n | f64 alpha | u32 k |
    u32 zero pad | u64 reference fingerprint | n * f32 values

Text formats:
    embeddings TSV: tab-separated decimal fields, '#' comment lines skipped
    ground truth TSV: "query_idx<TAB>cand_idx", duplicates merged
    attribute labels TSV: "cand_idx<TAB>A|B<TAB>group" (group optional)
    query groups TSV: "query_idx<TAB>group"

Writes are atomic: data goes to a temp file in the target directory which
is then renamed over the destination.
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import _kernel
from .errors import (
    BadMagic,
    IoError,
    NonFiniteValue,
    ParseError,
    RaggedRows,
    TruncatedFile,
    ZeroVectorOnNormalize,
)
from .ranking import RankingTable

_EMB_HEADER = struct.Struct("<4sIIIBB6x")  # 24 bytes
_BIA_HEADER = struct.Struct("<4sIIdI4xQ")  # 36 bytes

EMB_MAGIC = b"EMB1"
BIA_MAGIC = b"BIA1"


@dataclass(eq=False)
class EmbeddingMatrix:
    """Dense rows-by-dim float32 matrix of embedding vectors.

    Treated as immutable after construction; lazily caches the widened
    float64 views used by the score kernels and its own fingerprint.
    """

    data: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 2:
            raise ValueError("embedding data must be 2-D (rows, dim)")
        if arr.shape[1] < 1:
            raise ValueError("dim must be >= 1")
        bad = np.flatnonzero(~np.isfinite(arr))
        if bad.size:
            raise NonFiniteValue(24 + 4 * int(bad[0]))
        if self.normalized and arr.shape[0]:
            norms = np.linalg.norm(arr.astype(np.float64), axis=1)
            if np.max(np.abs(norms - 1.0)) > 1e-4:
                raise ValueError("normalized flag set but rows are not unit norm")
        self.data = arr
        self._rows64 = None
        self._cols64 = None
        self._fp = None

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def rows64(self) -> np.ndarray:
        """Cached float64 widening of the rows."""
        if self._rows64 is None:
            self._rows64 = _kernel.widen_rows(self.data)
        return self._rows64

    def cols64(self) -> np.ndarray:
        """Cached float64 transpose, the candidate-side kernel layout."""
        if self._cols64 is None:
            self._cols64 = _kernel.widen_cols(self.data)
        return self._cols64

    def header_bytes(self) -> bytes:
        return _EMB_HEADER.pack(
            EMB_MAGIC, 1, self.rows, self.dim, 1, int(self.normalized)
        )

    def payload_bytes(self) -> bytes:
        return self.data.astype("<f4", copy=False).tobytes()


def normalize_rows(data: np.ndarray) -> np.ndarray:
    """Scale each row to unit L2 norm in 64-bit arithmetic.

    Raises ZeroVectorOnNormalize for any all-zero row.
    """
    wide = np.asarray(data, dtype=np.float64)
    norms = np.linalg.norm(wide, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ZeroVectorOnNormalize(int(zero[0]))
    return wide / norms[:, np.newaxis]


def fingerprint(m: EmbeddingMatrix) -> int:
    """FNV-1a 64-bit digest over the serialized header then payload bytes."""
    if m._fp is None:
        m._fp = _kernel.fnv1a64(m.header_bytes() + m.payload_bytes())
    return m._fp


def atomic_write(path: str, payload: bytes) -> None:
    """Write bytes to path via a temp file plus rename in the same directory."""
    directory = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(payload)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _open_text(path: str):
    try:
        return open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def save_matrix(m: EmbeddingMatrix, path: str) -> None:
    """Serialize a matrix to an EMB1 file (atomic, bit-exact round-trip)."""
    atomic_write(path, m.header_bytes() + m.payload_bytes())


def load_matrix(path: str) -> EmbeddingMatrix:
    """Load an EMB1 file written by save_matrix.

    Errors name the byte offset of the violation: BadMagic for any invalid
    header field (including trailing bytes past the declared payload),
    TruncatedFile when the file ends early, NonFiniteValue for NaN or Inf
    payload values.
    """
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if len(blob) < _EMB_HEADER.size:
        raise TruncatedFile(len(blob), f"header needs {_EMB_HEADER.size} bytes")
    magic, version, rows, dim, dtype, norm_flag = _EMB_HEADER.unpack_from(blob)
    if magic != EMB_MAGIC:
        raise BadMagic(0, f"expected {EMB_MAGIC!r}, got {magic!r}")
    if version != 1:
        raise BadMagic(4, f"unsupported version {version}")
    if dim < 1:
        raise BadMagic(12, "dim must be >= 1")
    if dtype != 1:
        raise BadMagic(16, f"unsupported dtype code {dtype}")
    if norm_flag not in (0, 1):
        raise BadMagic(17, f"normalized flag must be 0 or 1, got {norm_flag}")
    expected = _EMB_HEADER.size + rows * dim * 4
    if len(blob) < expected:
        raise TruncatedFile(len(blob), f"payload needs {expected} bytes total")
    if len(blob) > expected:
        raise BadMagic(expected, "trailing bytes past declared payload")
    flat = np.frombuffer(blob, dtype="<f4", count=rows * dim, offset=24)
    bad = np.flatnonzero(~np.isfinite(flat))
    if bad.size:
        raise NonFiniteValue(24 + 4 * int(bad[0]))
    data = flat.reshape(rows, dim).astype(np.float32)
    return EmbeddingMatrix(data, normalized=bool(norm_flag))


def import_tsv(path: str, normalize: bool) -> EmbeddingMatrix:
    """Parse a TSV of decimal fields into a matrix, optionally unit-normalizing.

    Comment lines starting with '#' and blank lines are skipped. Every data
    line must have the same number of fields.
    """
    rows: list[list[float]] = []
    width: int | None = None
    with _open_text(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.rstrip("\n").rstrip("\r")
            if not stripped.strip() or stripped.lstrip().startswith("#"):
                continue
            fields = stripped.split("\t")
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise RaggedRows(line_no, width, len(fields))
            try:
                rows.append([float(f) for f in fields])
            except ValueError as exc:
                raise ParseError(line_no, f"not a decimal field: {exc}") from exc
    if width is None:
        raise ParseError(0, "no data rows in TSV")
    arr = np.array(rows, dtype=np.float64)
    if normalize:
        arr = normalize_rows(arr)
    return EmbeddingMatrix(arr.astype(np.float32), normalized=normalize)


@dataclass(eq=False)
class BiasVector:
    """Per-candidate additive bias with the parameters that produced it.

    values are stored at 32-bit precision (computed via 64-bit means);
    ref_fingerprint ties the vector to the reference set it came from.
    warnings is in-memory metadata only and is not persisted.
    """

    values: np.ndarray
    alpha: float
    k: int
    ref_fingerprint: int
    warnings: tuple[str, ...] = field(default=())

    def __post_init__(self):
        arr = np.ascontiguousarray(self.values, dtype=np.float32)
        if arr.ndim != 1:
            raise ValueError("bias values must be 1-D")
        bad = np.flatnonzero(~np.isfinite(arr))
        if bad.size:
            raise NonFiniteValue(36 + 4 * int(bad[0]))
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        self.values = arr

    def matches_reference(self, refs: EmbeddingMatrix) -> bool:
        """True when this bias was computed from the given reference set."""
        return self.ref_fingerprint == fingerprint(refs)


def save_bias(b: BiasVector, path: str) -> None:
    header = _BIA_HEADER.pack(
        BIA_MAGIC, 1, b.values.shape[0], float(b.alpha), int(b.k),
        b.ref_fingerprint,
    )
    atomic_write(path, header + b.values.astype("<f4", copy=False).tobytes())


def load_bias(path: str) -> BiasVector:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if len(blob) < _BIA_HEADER.size:
        raise TruncatedFile(len(blob), f"header needs {_BIA_HEADER.size} bytes")
    magic, version, n, alpha, k, ref_fp = _BIA_HEADER.unpack_from(blob)
    if magic != BIA_MAGIC:
        raise BadMagic(0, f"expected {BIA_MAGIC!r}, got {magic!r}")
    if version != 1:
        raise BadMagic(4, f"unsupported version {version}")
    expected = _BIA_HEADER.size + n * 4
    if len(blob) < expected:
        raise TruncatedFile(len(blob), f"payload needs {expected} bytes total")
    if len(blob) > expected:
        raise BadMagic(expected, "trailing bytes past declared payload")
    values = np.frombuffer(blob, dtype="<f4", count=n, offset=_BIA_HEADER.size)
    return BiasVector(values.astype(np.float32), alpha, k, ref_fp)


@dataclass(eq=False)
class GroundTruth:
    """Map from query index to the set of correct candidate indices."""

    mapping: dict[int, frozenset[int]]

    def correct(self, query: int) -> frozenset[int]:
        return self.mapping[query]

    def validate(self, n_queries: int | None = None,
                 n_candidates: int | None = None) -> None:
        for q, cands in self.mapping.items():
            if not cands:
                raise ValueError(f"query {q}: empty truth set")
            if n_queries is not None and not 0 <= q < n_queries:
                raise ValueError(f"query index {q} out of range")
            if n_candidates is not None and any(
                not 0 <= c < n_candidates for c in cands
            ):
                raise ValueError(f"query {q}: candidate index out of range")


def load_truth_tsv(path: str) -> GroundTruth:
    """Read "query_idx<TAB>cand_idx" pairs; duplicate pairs merge."""
    mapping: dict[int, set[int]] = {}
    with _open_text(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            fields = stripped.split("\t")
            if len(fields) != 2:
                raise ParseError(line_no, f"expected 2 fields, got {len(fields)}")
            try:
                q, c = int(fields[0]), int(fields[1])
            except ValueError as exc:
                raise ParseError(line_no, f"not an integer: {exc}") from exc
            if q < 0 or c < 0:
                raise ParseError(line_no, "indices must be non-negative")
            mapping.setdefault(q, set()).add(c)
    return GroundTruth({q: frozenset(cands) for q, cands in mapping.items()})


@dataclass(eq=False)
class AttributeLabels:
    """Binary attribute (A or B) and optional group tag per candidate."""

    attribute: dict[int, str]
    group: dict[int, str]

    def validate(self, n_candidates: int | None = None) -> None:
        for c in self.attribute:
            if n_candidates is not None and not 0 <= c < n_candidates:
                raise ValueError(f"candidate index {c} out of range")


def load_labels_tsv(path: str) -> AttributeLabels:
    """Read "cand_idx<TAB>A|B<TAB>group" lines; the group field is optional."""
    attribute: dict[int, str] = {}
    group: dict[int, str] = {}
    with _open_text(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            fields = stripped.split("\t")
            if len(fields) not in (2, 3):
                raise ParseError(line_no, f"expected 2 or 3 fields, got {len(fields)}")
            try:
                c = int(fields[0])
            except ValueError as exc:
                raise ParseError(line_no, f"not an integer: {exc}") from exc
            if fields[1] not in ("A", "B"):
                raise ParseError(line_no, f"attribute must be A or B, got {fields[1]!r}")
            attribute[c] = fields[1]
            if len(fields) == 3:
                group[c] = fields[2]
    return AttributeLabels(attribute, group)


def load_query_groups_tsv(path: str) -> dict[int, str]:
    """Read "query_idx<TAB>group" lines into a dict."""
    groups: dict[int, str] = {}
    with _open_text(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            fields = stripped.split("\t")
            if len(fields) != 2:
                raise ParseError(line_no, f"expected 2 fields, got {len(fields)}")
            try:
                groups[int(fields[0])] = fields[1]
            except ValueError as exc:
                raise ParseError(line_no, f"not an integer: {exc}") from exc
    return groups


def write_ranking_jsonl(table: RankingTable, path: str) -> None:
    """Write a table as JSON lines: {"query": i, "hits": [{"cand", "score"}]}."""
    lines = []
    for q in range(table.n_queries):
        hits = [
            {"cand": int(c), "score": float(s)}
            for c, s in zip(table.indices[q], table.scores[q])
        ]
        lines.append(json.dumps({"query": q, "hits": hits}))
    atomic_write(path, ("\n".join(lines) + ("\n" if lines else "")).encode())


def read_ranking_jsonl(path: str) -> RankingTable:
    """Read a table written by write_ranking_jsonl (uniform depth required)."""
    indices: list[list[int]] = []
    scores: list[list[float]] = []
    with _open_text(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(line_no, f"bad JSON: {exc}") from exc
            if obj.get("query") != len(indices):
                raise ParseError(line_no, "query indices must be 0,1,2,...")
            hits = obj.get("hits")
            if not isinstance(hits, list):
                raise ParseError(line_no, "missing hits list")
            indices.append([int(h["cand"]) for h in hits])
            scores.append([float(h["score"]) for h in hits])
    depths = {len(r) for r in indices}
    if len(depths) > 1:
        raise ParseError(0, "rows have differing depths")
    depth = depths.pop() if depths else 0
    return RankingTable(
        np.array(indices, dtype=np.int64).reshape(len(indices), depth),
        np.array(scores, dtype=np.float64).reshape(len(indices), depth),
    )
