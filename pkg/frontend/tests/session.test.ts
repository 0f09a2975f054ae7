import { afterAll, describe, expect, it } from "vitest";

import { CliError } from "../src/cli";
import { ShapeError } from "../src/formats";
import {
  BoundSession,
  computeBiasBound,
  retrieveBound,
  sessionFromArrays,
} from "../src/session";

const IDENTITY = [
  [1, 0],
  [0, 1],
];

// worked example shared with the pipeline's own tests
const CANDS = [
  [2, 0],
  [0, 4],
];
const REFS = [
  [1, 0],
  [0, 1],
  [1, 1],
];

function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function randomRows(n: number, d: number, seed: number): number[][] {
  const next = mulberry32(seed);
  const rows: number[][] = [];
  for (let i = 0; i < n; i++) {
    const row: number[] = [];
    for (let t = 0; t < d; t++) {
      row.push(next() * 2 - 1);
    }
    rows.push(row);
  }
  return rows;
}

const open: BoundSession[] = [];

function track(session: BoundSession): BoundSession {
  open.push(session);
  return session;
}

afterAll(() => {
  for (const session of open) {
    session.dispose();
  }
});

describe("sessionFromArrays", () => {
  it("binds a 2x2 identity matrix with two candidates", () => {
    const session = track(sessionFromArrays(IDENTITY, false));
    expect(session.rows).toBe(2);
    expect(session.dim).toBe(2);
  });

  it("binds an empty array as zero candidates", () => {
    const session = track(sessionFromArrays([], false));
    expect(session.rows).toBe(0);
  });

  it("rejects ragged input", () => {
    expect(() => sessionFromArrays([[1, 2], [3]], false)).toThrow(ShapeError);
  });

  it("normalizes through the shared importer when asked", () => {
    const session = track(sessionFromArrays([[3, 4]], true));
    const hits = retrieveBound(session, [[1, 0]], { method: "none" }, 1);
    expect(hits[0]!.hits[0]!.score).toBeCloseTo(0.6, 7);
  });
});

describe("computeBiasBound", () => {
  it("matches the worked example exactly", () => {
    const session = track(sessionFromArrays(CANDS, false));
    const bias = computeBiasBound(session, REFS, 0.5, 2);
    expect(Array.from(bias)).toEqual([1.0, 2.0]);
    expect(session.bias).not.toBeNull();
  });

  it("returns zeros at alpha 0", () => {
    const session = track(sessionFromArrays(CANDS, false));
    const bias = computeBiasBound(session, REFS, 0, 2);
    expect(Array.from(bias)).toEqual([0.0, 0.0]);
  });

  it("rejects an empty session with a shape error", () => {
    const session = track(sessionFromArrays([], false));
    expect(() => computeBiasBound(session, REFS, 0.5, 2)).toThrow(ShapeError);
    expect(() => computeBiasBound(session, REFS, 0.5, 2)).toThrow(/empty/);
  });

  it("propagates pipeline rejections without crashing", () => {
    const session = track(sessionFromArrays(CANDS, false));
    expect(() => computeBiasBound(session, [[1, 0, 0]], 0.5, 2)).toThrow(
      CliError
    );
    try {
      computeBiasBound(session, [[1, 0, 0]], 0.5, 2);
      expect.unreachable();
    } catch (err) {
      expect((err as CliError).exitCode).toBe(1);
      expect((err as CliError).message).toMatch(/DimMismatch/);
    }
  });
});

describe("retrieveBound", () => {
  it("returns each row's best match on the identity fixture", () => {
    const session = track(sessionFromArrays(IDENTITY, false));
    const table = retrieveBound(session, IDENTITY, { method: "none" }, 2);
    expect(table.length).toBe(2);
    expect(table[0]!.query).toBe(0);
    expect(table[0]!.hits[0]).toEqual({ cand: 0, score: 1.0 });
    expect(table[1]!.hits[0]).toEqual({ cand: 1, score: 1.0 });
    expect(table[0]!.hits.length).toBe(2);
  });

  it("reuses the session bias for follow-up debiased retrievals", () => {
    const session = track(sessionFromArrays(CANDS, false));
    computeBiasBound(session, REFS, 0.5, 2);
    const table = retrieveBound(
      session,
      [[1, 0.4]],
      { method: "nnn", alpha: 0.5, k: 2 },
      2
    );
    // debiased scores for (1, 0.4) are [2 - 1, 1.6 - 2] = [1.0, -0.4]
    expect(table[0]!.hits.map((h) => h.cand)).toEqual([0, 1]);
    expect(table[0]!.hits[0]!.score).toBeCloseTo(1.0, 6);
    expect(table[0]!.hits[1]!.score).toBeCloseTo(-0.4, 6);
  });

  it("accepts reference buffers on the method record", () => {
    const session = track(sessionFromArrays(CANDS, false));
    const table = retrieveBound(
      session,
      [[1, 0.4]],
      { method: "nnn", alpha: 0.5, k: 2, refQueries: REFS },
      2
    );
    expect(table[0]!.hits[0]!.score).toBeCloseTo(1.0, 6);
  });

  it("ranks qbnorm and dualis with beta1 0 identically", () => {
    const cands = randomRows(30, 8, 11);
    const refs = randomRows(50, 8, 12);
    const queries = randomRows(10, 8, 13);
    const session = track(sessionFromArrays(cands, false));
    const a = retrieveBound(
      session,
      queries,
      { method: "qbnorm", beta2: 40, refQueries: refs },
      30
    );
    const b = retrieveBound(
      session,
      queries,
      {
        method: "dualis",
        beta1: 0,
        beta2: 40,
        refQueries: refs,
        refCandidates: refs,
      },
      30
    );
    const order = (t: typeof a) => t.map((q) => q.hits.map((h) => h.cand));
    expect(order(b)).toEqual(order(a));
  });

  it("reports a usage error when nnn has no bias source", () => {
    const session = track(sessionFromArrays(CANDS, false));
    try {
      retrieveBound(session, [[1, 0]], { method: "nnn", alpha: 0.5, k: 2 }, 1);
      expect.unreachable();
    } catch (err) {
      expect(err).toBeInstanceOf(CliError);
      expect((err as CliError).exitCode).toBe(2);
      expect((err as CliError).message).toMatch(/--refs/);
    }
  });
});

describe("dispose", () => {
  it("turns later calls into clear errors", () => {
    const session = sessionFromArrays(IDENTITY, false);
    session.dispose();
    expect(() => retrieveBound(session, IDENTITY, { method: "none" }, 1)).toThrow(
      /disposed/
    );
    session.dispose(); // second dispose is a no-op
  });
});
