"""Batch command-line jobs over embedding, bias, ranking, and report files.

Subcommands wire the library into reproducible pipelines:

    convert    TSV -> EMB1 embedding file
    bias       candidate + reference EMB1 -> BIA1 bias vector
    retrieve   rank candidates for queries -> JSON-lines table
    eval       ranking + truth TSV -> recall report JSON
    sweep      grid-search bias parameters -> sweep JSON
    diagnose   ranking -> hub statistics JSON
    bias-attr  ranking + labels -> attribute bias/precision JSON
    bench      exact vs indexed bias timings -> bench JSON

Exit codes: 0 success, 1 data error (the module error name is printed
verbatim), 2 usage error. Every JSON report embeds its effective
configuration; a pipeline rerun with identical inputs, flags, and seeds
writes byte-identical files (the bench report's timing fields aside).
The NNN_THREADS environment variable caps worker parallelism (0 = auto).
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import io
from .diagnostics import hub_report, matched_counts
from .errors import NnnormError
from .evaluation import (
    attribute_bias,
    attribute_precision,
    evaluate,
    sweep_nnn,
)
from .index import DEFAULT_KMEANS_ITERS, DEFAULT_NPROBE, build_ivf
from .normalize import NormalizationSpec, apply, compute_bias


class _Usage(Exception):
    """Flag combination error detected after parsing."""


def _csv_ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x.strip()) for x in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad integer list: {exc}") from exc


def _csv_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x.strip()) for x in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad decimal list: {exc}") from exc


def _write_json(path: str, payload: dict) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    io.atomic_write(path, text.encode("utf-8"))


def _spec_config(spec: NormalizationSpec) -> dict:
    cfg = {"method": spec.method}
    for name in ("alpha", "k", "beta1", "beta2", "activation_threshold"):
        value = getattr(spec, name)
        if value is not None:
            cfg[name] = value
    return cfg


def _add_index_flags(p: argparse.ArgumentParser, what: str) -> None:
    mode = p.add_mutually_exclusive_group()
    mode.add_argument(
        "--exact", action="store_true",
        help=f"exhaustive {what} scoring (default)",
    )
    mode.add_argument(
        "--nprobe", type=int, default=None, metavar="N",
        help=f"use an inverted-file {what} index probing N lists",
    )
    p.add_argument(
        "--ncentroids", type=int, default=None, metavar="C",
        help="inverted-file list count (default: ceil(sqrt(rows)))",
    )
    p.add_argument(
        "--kmeans-iters", type=int, default=DEFAULT_KMEANS_ITERS, metavar="I",
        help="refinement iterations for list centers",
    )


def _maybe_ivf(args, matrix):
    """Inverted-file index when --nprobe was given, else None (exact)."""
    if args.nprobe is None:
        return None, DEFAULT_NPROBE
    if args.nprobe < 1:
        raise _Usage("--nprobe must be >= 1")
    index = build_ivf(matrix, args.ncentroids, args.kmeans_iters, args.seed)
    return index, args.nprobe


def _build_spec(args) -> NormalizationSpec:
    kwargs = {}
    for name in ("alpha", "k", "beta1", "beta2", "activation_threshold"):
        value = getattr(args, name)
        if value is not None:
            kwargs[name] = value
    try:
        return NormalizationSpec(args.method, **kwargs)
    except ValueError as exc:
        raise _Usage(f"--method {args.method}: {exc}") from exc


def _cmd_convert(args) -> int:
    matrix = io.import_tsv(args.input, args.normalize)
    io.save_matrix(matrix, args.output)
    return 0


def _cmd_bias(args) -> int:
    candidates = io.load_matrix(args.candidates)
    refs = io.load_matrix(args.refs)
    ref_index, nprobe = _maybe_ivf(args, refs)
    bias = compute_bias(candidates, refs, args.alpha, args.k, ref_index, nprobe)
    for warning in bias.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    io.save_bias(bias, args.output)
    return 0


def _cmd_retrieve(args) -> int:
    spec = _build_spec(args)
    if args.augmented and spec.method != "nnn":
        raise _Usage("--augmented applies only to --method nnn")
    if args.bias is not None and spec.method != "nnn":
        raise _Usage("--bias applies only to --method nnn")
    needs_refs = {"nnn", "dn", "qbnorm", "dualis", "dualdis"}
    needs_ref_cands = {"dn", "dualis", "dualdis"}
    if spec.method in needs_refs and not args.refs:
        if not (spec.method == "nnn" and args.bias):
            raise _Usage(f"--method {spec.method} requires --refs")
    if spec.method in needs_ref_cands and not args.ref_candidates:
        raise _Usage(f"--method {spec.method} requires --ref-candidates")
    queries = io.load_matrix(args.queries)
    candidates = io.load_matrix(args.candidates)
    refs = io.load_matrix(args.refs) if args.refs else None
    ref_candidates = (
        io.load_matrix(args.ref_candidates) if args.ref_candidates else None
    )
    bias = io.load_bias(args.bias) if args.bias else None
    if bias is not None and refs is not None and not bias.matches_reference(refs):
        print(
            "warning: bias file fingerprint does not match --refs",
            file=sys.stderr,
        )
    index, nprobe = _maybe_ivf(args, candidates)
    table = apply(
        spec,
        queries,
        candidates,
        ref_queries=refs,
        ref_candidates=ref_candidates,
        index=index,
        depth=args.depth,
        nprobe=nprobe,
        augmented=args.augmented,
        bias=bias,
    )
    io.write_ranking_jsonl(table, args.output)
    return 0


def _cmd_eval(args) -> int:
    table = io.read_ranking_jsonl(args.rankings)
    truth = io.load_truth_tsv(args.truth)
    report = evaluate(
        table, truth, args.k_list, args.bootstrap, args.level, args.seed
    )
    payload = report.to_json_dict()
    payload["config"] = {
        "subcommand": "eval",
        "rankings": args.rankings,
        "truth": args.truth,
        "k_list": list(args.k_list),
        "bootstrap": args.bootstrap,
        "level": args.level,
        "seed": args.seed,
    }
    _write_json(args.output, payload)
    return 0


def _cmd_sweep(args) -> int:
    queries = io.load_matrix(args.queries)
    candidates = io.load_matrix(args.candidates)
    refs = io.load_matrix(args.refs)
    truth = io.load_truth_tsv(args.truth)
    result = sweep_nnn(
        queries, candidates, refs, truth,
        args.alpha_grid, args.k_grid, args.seed,
    )
    payload = result.to_json_dict()
    payload["config"] = {
        "subcommand": "sweep",
        "queries": args.queries,
        "candidates": args.candidates,
        "refs": args.refs,
        "truth": args.truth,
        "alpha_grid": list(args.alpha_grid) if args.alpha_grid else None,
        "k_grid": list(args.k_grid) if args.k_grid else None,
        "seed": args.seed,
    }
    _write_json(args.output, payload)
    return 0


def _cmd_diagnose(args) -> int:
    table = io.read_ranking_jsonl(args.rankings)
    n = args.n_candidates
    if n is None:
        n = int(table.indices.max()) + 1 if table.indices.size else 0
    counts = matched_counts(table, n)
    report = hub_report(counts)
    payload = report.to_json_dict()
    payload["total_queries"] = counts.total_queries
    payload["config"] = {
        "subcommand": "diagnose",
        "rankings": args.rankings,
        "n_candidates": n,
    }
    _write_json(args.output, payload)
    return 0


def _cmd_bias_attr(args) -> int:
    table = io.read_ranking_jsonl(args.rankings)
    labels = io.load_labels_tsv(args.labels)
    groups = (
        io.load_query_groups_tsv(args.query_groups)
        if args.query_groups
        else None
    )
    payload = {
        "bias": attribute_bias(table, labels, args.n, groups),
        "precision": (
            attribute_precision(table, labels, groups, args.n)
            if groups is not None
            else None
        ),
        "config": {
            "subcommand": "bias-attr",
            "rankings": args.rankings,
            "labels": args.labels,
            "query_groups": args.query_groups,
            "n": args.n,
        },
    }
    _write_json(args.output, payload)
    return 0


def _cmd_bench(args) -> int:
    candidates = io.load_matrix(args.candidates)
    refs = io.load_matrix(args.refs)

    t0 = time.perf_counter()
    exact = compute_bias(candidates, refs, args.alpha, args.k)
    exact_seconds = time.perf_counter() - t0

    nprobe = args.nprobe if args.nprobe is not None else DEFAULT_NPROBE
    t0 = time.perf_counter()
    index = build_ivf(refs, args.ncentroids, args.kmeans_iters, args.seed)
    build_seconds = time.perf_counter() - t0

    t0 = time.perf_counter()
    approx = compute_bias(candidates, refs, args.alpha, args.k, index, nprobe)
    index_seconds = time.perf_counter() - t0

    delta = 0.0
    if exact.values.size:
        delta = float(
            np.max(
                np.abs(
                    exact.values.astype(np.float64)
                    - approx.values.astype(np.float64)
                )
            )
        )
    payload = {
        "config": {
            "subcommand": "bench",
            "candidates": args.candidates,
            "refs": args.refs,
            "alpha": args.alpha,
            "k": args.k,
            "nprobe": nprobe,
            "ncentroids": index.ncentroids,
            "kmeans_iters": args.kmeans_iters,
            "seed": args.seed,
        },
        "n_candidates": candidates.rows,
        "n_refs": refs.rows,
        "dim": candidates.dim,
        "exact_seconds": exact_seconds,
        "build_seconds": build_seconds,
        "index_seconds": index_seconds,
        "speedup": exact_seconds / index_seconds if index_seconds else None,
        "max_abs_delta": delta,
    }
    _write_json(args.output, payload)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nnn",
        description="Retrieval re-ranking jobs over embedding files.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("convert", help="TSV -> EMB1 embedding file")
    p.add_argument("--input", required=True, help="TSV of float fields")
    p.add_argument("--output", required=True, help="EMB1 path to write")
    p.add_argument(
        "--normalize", action=argparse.BooleanOptionalAction, default=True,
        help="unit-normalize rows on import (default true)",
    )
    p.set_defaults(func=_cmd_convert)

    p = sub.add_parser("bias", help="compute a per-candidate bias vector")
    p.add_argument("--candidates", required=True, help="EMB1 candidates")
    p.add_argument("--refs", required=True, help="EMB1 reference queries")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--k", type=int, required=True)
    _add_index_flags(p, "reference")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--output", required=True, help="BIA1 path to write")
    p.set_defaults(func=_cmd_bias)

    p = sub.add_parser("retrieve", help="rank candidates for each query")
    p.add_argument("--queries", required=True, help="EMB1 queries")
    p.add_argument("--candidates", required=True, help="EMB1 candidates")
    p.add_argument(
        "--method", required=True,
        choices=("none", "nnn", "dn", "qbnorm", "dualis", "dualdis"),
    )
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--beta1", type=float, default=None)
    p.add_argument("--beta2", type=float, default=None)
    p.add_argument("--activation-threshold", type=int, default=None)
    p.add_argument("--refs", default=None, help="EMB1 reference queries")
    p.add_argument(
        "--ref-candidates", default=None,
        help="EMB1 reference candidates (softmax candidate bank)",
    )
    p.add_argument(
        "--bias", default=None,
        help="precomputed BIA1 bias (skips the reference scan)",
    )
    p.add_argument("--depth", type=int, default=10, help="hits per query")
    p.add_argument(
        "--augmented", action="store_true",
        help="route bias correction through augmented embeddings",
    )
    _add_index_flags(p, "candidate")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--output", required=True, help="JSON-lines path to write")
    p.set_defaults(func=_cmd_retrieve)

    p = sub.add_parser("eval", help="recall report for a ranking")
    p.add_argument("--rankings", required=True, help="JSON-lines table")
    p.add_argument("--truth", required=True, help="TSV query->candidate")
    p.add_argument("--k-list", type=_csv_ints, default=(1, 5, 10))
    p.add_argument("--bootstrap", type=int, default=1000)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep", help="grid-search bias strength and width")
    p.add_argument("--queries", required=True, help="EMB1 test queries")
    p.add_argument("--candidates", required=True, help="EMB1 candidates")
    p.add_argument("--refs", required=True, help="EMB1 reference pool")
    p.add_argument("--truth", required=True, help="TSV over reference pool")
    p.add_argument("--alpha-grid", type=_csv_floats, default=None)
    p.add_argument("--k-grid", type=_csv_ints, default=None)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("diagnose", help="hub statistics for a ranking")
    p.add_argument("--rankings", required=True, help="JSON-lines table")
    p.add_argument(
        "--n-candidates", type=int, default=None,
        help="candidate count (default: 1 + max index in the table)",
    )
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_diagnose)

    p = sub.add_parser("bias-attr", help="attribute bias over top-n hits")
    p.add_argument("--rankings", required=True, help="JSON-lines table")
    p.add_argument("--labels", required=True, help="TSV candidate labels")
    p.add_argument(
        "--query-groups", default=None,
        help="TSV query->group; enables per-group means and precision",
    )
    p.add_argument("--n", type=int, default=10, help="top-n window")
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_bias_attr)

    p = sub.add_parser("bench", help="time exact vs indexed bias computation")
    p.add_argument("--candidates", required=True, help="EMB1 candidates")
    p.add_argument("--refs", required=True, help="EMB1 reference queries")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--nprobe", type=int, default=None, metavar="N")
    p.add_argument("--ncentroids", type=int, default=None, metavar="C")
    p.add_argument(
        "--kmeans-iters", type=int, default=DEFAULT_KMEANS_ITERS, metavar="I"
    )
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return args.func(args)
    except _Usage as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NnnormError, ValueError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
