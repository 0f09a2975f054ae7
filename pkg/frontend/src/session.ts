/**
 * Bound sessions: load a candidate matrix once, then compute bias
 * vectors and rankings against it from in-memory buffers. Heavy lifting
 * happens in the pipeline process; this layer encodes buffers to its
 * file formats, drives its command line, and decodes the results.
 */

import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { runNnn } from "./cli";
import {
  BiasFile,
  EmbeddingFile,
  RowsInput,
  ShapeError,
  decodeBia1,
  decodeEmb1,
  encodeEmb1,
  matrixFromRows,
} from "./formats";

export interface Hit {
  cand: number;
  score: number;
}

export interface QueryRanking {
  query: number;
  hits: Hit[];
}

/**
 * Scoring method plus its parameters; field names match the pipeline's
 * method descriptor exactly. Reference buffers ride along because the
 * session only holds candidates.
 */
export interface MethodRecord {
  method: "none" | "nnn" | "dn" | "qbnorm" | "dualis" | "dualdis";
  alpha?: number;
  k?: number;
  beta1?: number;
  beta2?: number;
  activation_threshold?: number;
  refQueries?: RowsInput;
  refCandidates?: RowsInput;
}

export function readEmb1File(path: string): EmbeddingFile {
  return decodeEmb1(readFileSync(path));
}

export function readBia1File(path: string): BiasFile {
  return decodeBia1(readFileSync(path));
}

export class BoundSession {
  readonly rows: number;
  readonly dim: number;

  private readonly dir: string;
  private readonly candidatesPath: string | null;
  private biasPath: string | null = null;
  private scratch = 0;
  private closed = false;

  constructor(candidates: RowsInput, normalize: boolean) {
    const matrix = matrixFromRows(candidates);
    this.rows = matrix.rows;
    this.dim = matrix.dim;
    this.dir = mkdtempSync(join(tmpdir(), "nnnorm-session-"));
    if (matrix.rows === 0) {
      // nothing to serialize; operations will reject the empty session
      this.candidatesPath = null;
    } else if (normalize) {
      // route through the pipeline's own importer so normalization has
      // exactly one implementation
      const tsv = join(this.dir, "candidates.tsv");
      writeFileSync(tsv, rowsToTsv(candidates));
      this.candidatesPath = join(this.dir, "candidates.emb1");
      runNnn(["convert", "--input", tsv, "--output", this.candidatesPath]);
    } else {
      this.candidatesPath = join(this.dir, "candidates.emb1");
      writeFileSync(this.candidatesPath, encodeEmb1(matrix));
    }
  }

  /** Path of the bias file from the latest computeBiasBound call. */
  get bias(): string | null {
    return this.biasPath;
  }

  dispose(): void {
    if (!this.closed) {
      rmSync(this.dir, { recursive: true, force: true });
      this.closed = true;
    }
  }

  /** @internal */
  candidatesFile(): string {
    if (this.closed) {
      throw new Error("session already disposed");
    }
    if (this.candidatesPath === null) {
      throw new ShapeError("session holds an empty candidate matrix");
    }
    return this.candidatesPath;
  }

  /** @internal */
  scratchPath(name: string): string {
    if (this.closed) {
      throw new Error("session already disposed");
    }
    this.scratch += 1;
    return join(this.dir, `${this.scratch}-${name}`);
  }

  /** @internal */
  rememberBias(path: string): void {
    this.biasPath = path;
  }
}

export function sessionFromArrays(
  candidates: RowsInput,
  normalize: boolean
): BoundSession {
  return new BoundSession(candidates, normalize);
}

/**
 * Per-candidate bias against a reference-query buffer; values equal the
 * pipeline's own bias computation because they are its output. The bias
 * file stays with the session and later nnn retrievals reuse it when no
 * reference buffer is supplied.
 */
export function computeBiasBound(
  session: BoundSession,
  refQueries: RowsInput,
  alpha: number,
  k: number
): Float32Array {
  const candidates = session.candidatesFile();
  const refsPath = session.scratchPath("refs.emb1");
  writeFileSync(refsPath, encodeEmb1(matrixFromRows(refQueries)));
  const biasPath = session.scratchPath("bias.bia1");
  runNnn([
    "bias",
    "--candidates", candidates,
    "--refs", refsPath,
    "--alpha", String(alpha),
    "--k", String(k),
    "--output", biasPath,
  ]);
  session.rememberBias(biasPath);
  return readBia1File(biasPath).values;
}

/** Rank the session's candidates for each query row. */
export function retrieveBound(
  session: BoundSession,
  queries: RowsInput,
  method: MethodRecord,
  depth: number
): QueryRanking[] {
  const candidates = session.candidatesFile();
  const queriesPath = session.scratchPath("queries.emb1");
  writeFileSync(queriesPath, encodeEmb1(matrixFromRows(queries)));

  const args = [
    "retrieve",
    "--queries", queriesPath,
    "--candidates", candidates,
    "--method", method.method,
    "--depth", String(depth),
  ];
  const flags: Array<[string, number | undefined]> = [
    ["--alpha", method.alpha],
    ["--k", method.k],
    ["--beta1", method.beta1],
    ["--beta2", method.beta2],
    ["--activation-threshold", method.activation_threshold],
  ];
  for (const [flag, value] of flags) {
    if (value !== undefined) {
      args.push(flag, String(value));
    }
  }
  if (method.refQueries !== undefined) {
    const refsPath = session.scratchPath("refs.emb1");
    writeFileSync(refsPath, encodeEmb1(matrixFromRows(method.refQueries)));
    args.push("--refs", refsPath);
  } else if (method.method === "nnn" && session.bias !== null) {
    args.push("--bias", session.bias);
  }
  if (method.refCandidates !== undefined) {
    const refCandsPath = session.scratchPath("ref_candidates.emb1");
    writeFileSync(
      refCandsPath,
      encodeEmb1(matrixFromRows(method.refCandidates))
    );
    args.push("--ref-candidates", refCandsPath);
  }

  const outPath = session.scratchPath("rankings.jsonl");
  args.push("--output", outPath);
  runNnn(args);
  return parseRankingJsonl(readFileSync(outPath, "utf8"));
}

export function parseRankingJsonl(text: string): QueryRanking[] {
  const out: QueryRanking[] = [];
  for (const line of text.split("\n")) {
    if (line.trim() === "") {
      continue;
    }
    out.push(JSON.parse(line) as QueryRanking);
  }
  return out;
}

function rowsToTsv(rows: RowsInput): string {
  const lines: string[] = [];
  for (const row of rows) {
    const fields: string[] = [];
    for (let t = 0; t < row.length; t++) {
      fields.push(String(row[t]));
    }
    lines.push(fields.join("\t"));
  }
  return lines.join("\n") + (lines.length ? "\n" : "");
}
