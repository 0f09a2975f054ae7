"""Nearest-neighbor score normalization for embedding retrieval.

Retrieval over a shared embedding space ranks candidates by inner-product
score, and a handful of hub candidates tend to win far more queries than
they should. This package estimates a per-candidate bias from a reference
query set (a scaled mean of each candidate's k highest reference scores),
subtracts it at ranking time, and ships the surrounding tooling: exact
and inverted-file maximum-inner-product search, alternative score
normalizers for comparison, hubness diagnostics, recall evaluation with
bootstrap intervals, parameter sweeps, and a batch CLI over simple binary
file formats.

All scoring follows one determinism contract: scores accumulate in
64-bit floats over 32-bit inputs in ascending dimension order per pair,
so results never depend on batch shape or thread schedule, and ties break
by ascending candidate index.
"""

from . import errors
from .datagen import HubBenchmark, random_unit_rows, synthetic_hub_instance
from .diagnostics import (
    HubReport,
    MatchedCounts,
    compare_reports,
    hub_report,
    matched_counts,
)
from .errors import NnnormError
from .evaluation import (
    DEFAULT_ALPHA_GRID,
    DEFAULT_K_GRID,
    RecallReport,
    SweepResult,
    ablate_reference,
    attribute_bias,
    attribute_precision,
    bootstrap_ci,
    evaluate,
    per_query_hits,
    recall_at_k,
    sweep_nnn,
)
from .index import (
    DEFAULT_KMEANS_ITERS,
    DEFAULT_NPROBE,
    IndexParams,
    VectorIndex,
    batch_search,
    build_exact,
    build_ivf,
    kmeans,
    search,
)
from .io import (
    AttributeLabels,
    BiasVector,
    EmbeddingMatrix,
    GroundTruth,
    fingerprint,
    import_tsv,
    load_bias,
    load_labels_tsv,
    load_matrix,
    load_query_groups_tsv,
    load_truth_tsv,
    normalize_rows,
    read_ranking_jsonl,
    save_bias,
    save_matrix,
    write_ranking_jsonl,
)
from .normalize import (
    METHODS,
    NormalizationSpec,
    apply,
    augment_candidates,
    augment_query,
    build_activation_set,
    compute_bias,
    debias_scores,
    dn_transform,
    dualdis_scores,
    dualis_scores,
    qbnorm_scores,
)
from .ranking import RankingTable, SearchHit, tables_equal

__version__ = "1.0.0"

__all__ = [
    "AttributeLabels",
    "BiasVector",
    "DEFAULT_ALPHA_GRID",
    "DEFAULT_KMEANS_ITERS",
    "DEFAULT_K_GRID",
    "DEFAULT_NPROBE",
    "EmbeddingMatrix",
    "GroundTruth",
    "HubBenchmark",
    "HubReport",
    "IndexParams",
    "MatchedCounts",
    "METHODS",
    "NnnormError",
    "NormalizationSpec",
    "RankingTable",
    "RecallReport",
    "SearchHit",
    "SweepResult",
    "VectorIndex",
    "ablate_reference",
    "apply",
    "attribute_bias",
    "attribute_precision",
    "augment_candidates",
    "augment_query",
    "batch_search",
    "bootstrap_ci",
    "build_activation_set",
    "build_exact",
    "build_ivf",
    "compare_reports",
    "compute_bias",
    "debias_scores",
    "dn_transform",
    "dualdis_scores",
    "dualis_scores",
    "errors",
    "evaluate",
    "fingerprint",
    "hub_report",
    "import_tsv",
    "kmeans",
    "load_bias",
    "load_labels_tsv",
    "load_matrix",
    "load_query_groups_tsv",
    "load_truth_tsv",
    "matched_counts",
    "normalize_rows",
    "per_query_hits",
    "qbnorm_scores",
    "random_unit_rows",
    "read_ranking_jsonl",
    "recall_at_k",
    "save_bias",
    "save_matrix",
    "search",
    "sweep_nnn",
    "synthetic_hub_instance",
    "tables_equal",
    "write_ranking_jsonl",
]
