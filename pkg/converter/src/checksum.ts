/**
 * Checksum verification for raw inputs. Conversion refuses to read a raw
 * file whose sha256 digest disagrees with the manifest, so a silently
 * truncated download cannot produce a plausible-looking corpus.
 */

import { createHash } from "node:crypto";
import { readFileSync } from "node:fs";
import * as path from "node:path";

import { ConversionError } from "./types.js";

export function sha256Hex(data: Buffer | string): string {
  return createHash("sha256").update(data).digest("hex");
}

export type ChecksumManifest = Record<string, string>;

export function loadManifest(root: string): ChecksumManifest {
  const manifestPath = path.join(root, "checksums.json");
  let parsed: unknown;
  try {
    parsed = JSON.parse(readFileSync(manifestPath, "utf8"));
  } catch (err) {
    throw new ConversionError(`${manifestPath}: ${(err as Error).message}`);
  }
  if (typeof parsed !== "object" || parsed === null || Array.isArray(parsed)) {
    throw new ConversionError(`${manifestPath}: manifest must be an object of file -> sha256`);
  }
  return parsed as ChecksumManifest;
}

/**
 * Read a file relative to `root`, verifying it against the manifest.
 * Throws on a missing manifest entry or a digest mismatch.
 */
export function readVerified(root: string, relPath: string, manifest: ChecksumManifest): Buffer {
  const expected = manifest[relPath];
  if (expected === undefined) {
    throw new ConversionError(`${relPath}: no checksum in manifest`);
  }
  const data = readFileSync(path.join(root, relPath));
  const actual = sha256Hex(data);
  if (actual !== expected.toLowerCase()) {
    throw new ConversionError(`${relPath}: checksum mismatch (expected ${expected}, got ${actual})`);
  }
  return data;
}
