import { writeFileSync, mkdirSync } from "node:fs";
import * as path from "node:path";
import { describe, expect, it } from "vitest";

import { loadManifest, readVerified, sha256Hex } from "../src/checksum.js";
import { ConversionError } from "../src/types.js";
import { tempDir } from "./helpers.js";

describe("sha256Hex", () => {
  it("matches the published digest of 'abc'", () => {
    expect(sha256Hex("abc")).toBe(
      "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad",
    );
  });

  it("is identical for equal Buffer and string input", () => {
    expect(sha256Hex(Buffer.from("hello"))).toBe(sha256Hex("hello"));
  });
});

describe("readVerified", () => {
  function setup() {
    const root = tempDir("ck-");
    mkdirSync(path.join(root, "cells"));
    const body = '{"x": 1}';
    writeFileSync(path.join(root, "cells", "a.json"), body);
    const manifest = { [path.join("cells", "a.json")]: sha256Hex(body) };
    writeFileSync(path.join(root, "checksums.json"), JSON.stringify(manifest));
    return { root, body };
  }

  it("returns the bytes when the digest matches", () => {
    const { root, body } = setup();
    const manifest = loadManifest(root);
    expect(readVerified(root, path.join("cells", "a.json"), manifest).toString()).toBe(body);
  });

  it("rejects a file missing from the manifest", () => {
    const { root } = setup();
    const manifest = loadManifest(root);
    expect(() => readVerified(root, "cells/missing.json", manifest)).toThrow(ConversionError);
    expect(() => readVerified(root, "cells/missing.json", manifest)).toThrow(/no checksum/);
  });

  it("rejects tampered bytes", () => {
    const { root } = setup();
    const manifest = loadManifest(root);
    writeFileSync(path.join(root, "cells", "a.json"), '{"x": 2}');
    expect(() => readVerified(root, path.join("cells", "a.json"), manifest)).toThrow(/mismatch/);
  });

  it("rejects a malformed manifest", () => {
    const root = tempDir("ck-");
    writeFileSync(path.join(root, "checksums.json"), "[1,2,3]");
    expect(() => loadManifest(root)).toThrow(/object/);
  });
});
