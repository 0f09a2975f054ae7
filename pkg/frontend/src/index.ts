export {
  BIA1_HEADER_BYTES,
  BiasFile,
  EMB1_HEADER_BYTES,
  EmbeddingFile,
  FormatError,
  RowsInput,
  ShapeError,
  decodeBia1,
  decodeEmb1,
  encodeEmb1,
  matrixFromRows,
} from "./formats";
export { CliError, runNnn } from "./cli";
export {
  BoundSession,
  Hit,
  MethodRecord,
  QueryRanking,
  computeBiasBound,
  parseRankingJsonl,
  readBia1File,
  readEmb1File,
  retrieveBound,
  sessionFromArrays,
} from "./session";
