export * from "./types.js";
export { sha256Hex, loadManifest, readVerified } from "./checksum.js";
export { parseRawCell, cleanCell } from "./raw.js";
export { canonicalMeta, canonicalCsv, writeCellDir, CSV_HEADER } from "./canonical.js";
export { convert, validateSpec } from "./convert.js";
export { runCli } from "./cli.js";
