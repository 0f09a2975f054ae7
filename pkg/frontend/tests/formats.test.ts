import { describe, expect, it } from "vitest";

import {
  BIA1_HEADER_BYTES,
  EMB1_HEADER_BYTES,
  FormatError,
  ShapeError,
  decodeBia1,
  decodeEmb1,
  encodeEmb1,
  matrixFromRows,
} from "../src/formats";

describe("matrixFromRows", () => {
  it("flattens row-major", () => {
    const m = matrixFromRows([
      [1, 2, 3],
      [4, 5, 6],
    ]);
    expect(m.rows).toBe(2);
    expect(m.dim).toBe(3);
    expect(Array.from(m.data)).toEqual([1, 2, 3, 4, 5, 6]);
  });

  it("accepts empty input as a 0x0 matrix", () => {
    const m = matrixFromRows([]);
    expect(m.rows).toBe(0);
    expect(m.dim).toBe(0);
    expect(m.data.length).toBe(0);
  });

  it("rejects ragged rows", () => {
    expect(() => matrixFromRows([[1, 2], [3]])).toThrow(ShapeError);
    expect(() => matrixFromRows([[1, 2], [3]])).toThrow(/row 1 has 1/);
  });
});

describe("encodeEmb1", () => {
  it("writes a 28 byte file for a 1x1 matrix", () => {
    const buf = encodeEmb1(matrixFromRows([[0.5]]));
    expect(buf.length).toBe(EMB1_HEADER_BYTES + 4);
    expect(buf.toString("ascii", 0, 4)).toBe("EMB1");
    expect(buf.readUInt32LE(4)).toBe(1);
    expect(buf.readUInt32LE(8)).toBe(1);
    expect(buf.readUInt32LE(12)).toBe(1);
    expect(buf.readUInt8(16)).toBe(1);
    expect(buf.readUInt8(17)).toBe(0);
    expect(buf.readFloatLE(24)).toBe(0.5);
  });

  it("records the normalized flag", () => {
    const m = matrixFromRows([[1, 0]]);
    const flagged = encodeEmb1({ ...m, normalized: true });
    expect(flagged.readUInt8(17)).toBe(1);
    expect(decodeEmb1(flagged).normalized).toBe(true);
  });

  it("rejects a payload that disagrees with the shape", () => {
    expect(() =>
      encodeEmb1({ rows: 2, dim: 2, normalized: false, data: new Float32Array(3) })
    ).toThrow(ShapeError);
  });
});

describe("decodeEmb1", () => {
  it("round-trips values bit for bit", () => {
    const rows = [
      [0.1, -2.5, 3.14159],
      [1e-30, -0.0, 65504],
    ];
    const m = matrixFromRows(rows);
    const back = decodeEmb1(encodeEmb1(m));
    expect(back.rows).toBe(2);
    expect(back.dim).toBe(3);
    const a = new Uint32Array(m.data.buffer, 0, m.data.length);
    const b = new Uint32Array(back.data.buffer, 0, back.data.length);
    expect(Array.from(b)).toEqual(Array.from(a));
  });

  it("rejects bad magic", () => {
    const buf = encodeEmb1(matrixFromRows([[1]]));
    buf.write("XXXX", 0, "ascii");
    expect(() => decodeEmb1(buf)).toThrow(FormatError);
    expect(() => decodeEmb1(buf)).toThrow(/magic/);
  });

  it("rejects an unknown version", () => {
    const buf = encodeEmb1(matrixFromRows([[1]]));
    buf.writeUInt32LE(7, 4);
    expect(() => decodeEmb1(buf)).toThrow(/version/);
  });

  it("rejects truncated files", () => {
    const buf = encodeEmb1(matrixFromRows([[1, 2]]));
    expect(() => decodeEmb1(buf.subarray(0, 10))).toThrow(/truncated/);
    expect(() => decodeEmb1(buf.subarray(0, buf.length - 4))).toThrow(
      FormatError
    );
  });
});

describe("decodeBia1", () => {
  function handBuffer(): Buffer {
    const buf = Buffer.alloc(BIA1_HEADER_BYTES + 8);
    buf.write("BIA1", 0, "ascii");
    buf.writeUInt32LE(1, 4);
    buf.writeUInt32LE(2, 8);
    buf.writeDoubleLE(0.5, 12);
    buf.writeUInt32LE(2, 20);
    buf.writeBigUInt64LE(0xdeadbeefn, 28);
    buf.writeFloatLE(1.0, 36);
    buf.writeFloatLE(2.0, 40);
    return buf;
  }

  it("reads every header field", () => {
    const bias = decodeBia1(handBuffer());
    expect(bias.alpha).toBe(0.5);
    expect(bias.k).toBe(2);
    expect(bias.refFingerprint).toBe(0xdeadbeefn);
    expect(Array.from(bias.values)).toEqual([1.0, 2.0]);
  });

  it("rejects bad magic and short payloads", () => {
    const buf = handBuffer();
    const broken = Buffer.from(buf);
    broken.write("EMB1", 0, "ascii");
    expect(() => decodeBia1(broken)).toThrow(/magic/);
    expect(() => decodeBia1(buf.subarray(0, buf.length - 4))).toThrow(
      FormatError
    );
  });
});
