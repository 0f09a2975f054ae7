/**
 * Binary file formats shared with the pipeline: EMB1 embedding matrices
 * and BIA1 bias vectors. Both are little-endian with fixed headers and
 * round-trip bit-exactly.
 */

export class ShapeError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ShapeError";
  }
}

export class FormatError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "FormatError";
  }
}

const EMB1_MAGIC = "EMB1";
const BIA1_MAGIC = "BIA1";
export const EMB1_HEADER_BYTES = 24;
export const BIA1_HEADER_BYTES = 36;

export interface EmbeddingFile {
  rows: number;
  dim: number;
  normalized: boolean;
  /** Row-major float32 payload, rows * dim entries. */
  data: Float32Array;
}

export interface BiasFile {
  alpha: number;
  k: number;
  refFingerprint: bigint;
  values: Float32Array;
}

export type RowsInput = ReadonlyArray<ArrayLike<number>>;

/** Flatten row arrays into a float32 matrix; ragged input is rejected. */
export function matrixFromRows(rows: RowsInput): EmbeddingFile {
  const n = rows.length;
  const first = rows[0];
  const dim = n === 0 || first === undefined ? 0 : first.length;
  const data = new Float32Array(n * dim);
  for (let i = 0; i < n; i++) {
    const row = rows[i];
    if (row === undefined || row.length !== dim) {
      throw new ShapeError(
        `row ${i} has ${row?.length ?? 0} entries, expected ${dim}`
      );
    }
    for (let t = 0; t < dim; t++) {
      data[i * dim + t] = Number(row[t]);
    }
  }
  return { rows: n, dim, normalized: false, data };
}

export function encodeEmb1(matrix: EmbeddingFile): Buffer {
  const { rows, dim, normalized, data } = matrix;
  if (data.length !== rows * dim) {
    throw new ShapeError(
      `payload has ${data.length} entries, expected ${rows}x${dim}`
    );
  }
  const buf = Buffer.alloc(EMB1_HEADER_BYTES + 4 * rows * dim);
  buf.write(EMB1_MAGIC, 0, "ascii");
  buf.writeUInt32LE(1, 4); // version
  buf.writeUInt32LE(rows, 8);
  buf.writeUInt32LE(dim, 12);
  buf.writeUInt8(1, 16); // dtype: float32
  buf.writeUInt8(normalized ? 1 : 0, 17);
  // bytes 18..23 stay zero padding
  for (let i = 0; i < data.length; i++) {
    buf.writeFloatLE(data[i]!, EMB1_HEADER_BYTES + 4 * i);
  }
  return buf;
}

export function decodeEmb1(buf: Buffer): EmbeddingFile {
  if (buf.length < EMB1_HEADER_BYTES) {
    throw new FormatError(`file truncated at byte ${buf.length}`);
  }
  if (buf.toString("ascii", 0, 4) !== EMB1_MAGIC) {
    throw new FormatError("bad magic at byte 0");
  }
  if (buf.readUInt32LE(4) !== 1) {
    throw new FormatError("unsupported version at byte 4");
  }
  const rows = buf.readUInt32LE(8);
  const dim = buf.readUInt32LE(12);
  if (buf.readUInt8(16) !== 1) {
    throw new FormatError("unsupported dtype at byte 16");
  }
  const normalized = buf.readUInt8(17) !== 0;
  const expected = EMB1_HEADER_BYTES + 4 * rows * dim;
  if (buf.length !== expected) {
    throw new FormatError(
      `payload is ${buf.length - EMB1_HEADER_BYTES} bytes, ` +
        `expected ${expected - EMB1_HEADER_BYTES}`
    );
  }
  const data = new Float32Array(rows * dim);
  for (let i = 0; i < data.length; i++) {
    data[i] = buf.readFloatLE(EMB1_HEADER_BYTES + 4 * i);
  }
  return { rows, dim, normalized, data };
}

export function decodeBia1(buf: Buffer): BiasFile {
  if (buf.length < BIA1_HEADER_BYTES) {
    throw new FormatError(`file truncated at byte ${buf.length}`);
  }
  if (buf.toString("ascii", 0, 4) !== BIA1_MAGIC) {
    throw new FormatError("bad magic at byte 0");
  }
  if (buf.readUInt32LE(4) !== 1) {
    throw new FormatError("unsupported version at byte 4");
  }
  const n = buf.readUInt32LE(8);
  const alpha = buf.readDoubleLE(12);
  const k = buf.readUInt32LE(20);
  // bytes 24..27 are padding
  const refFingerprint = buf.readBigUInt64LE(28);
  if (buf.length !== BIA1_HEADER_BYTES + 4 * n) {
    throw new FormatError(
      `payload is ${buf.length - BIA1_HEADER_BYTES} bytes, expected ${4 * n}`
    );
  }
  const values = new Float32Array(n);
  for (let i = 0; i < n; i++) {
    values[i] = buf.readFloatLE(BIA1_HEADER_BYTES + 4 * i);
  }
  return { alpha, k, refFingerprint, values };
}
