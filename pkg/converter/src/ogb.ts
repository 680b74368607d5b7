/**
 * Parser for extracted OGB node-property archives. Expected layout under
 * the source directory (as unpacked from the official zip):
 *
 *   raw/node-feat.csv.gz    n rows of d comma-separated floats
 *   raw/edge.csv.gz         e rows of "src,dst"
 *   raw/node-label.csv.gz   n rows of one integer
 *   split/<scheme>/{train,valid,test}.csv.gz   node indices
 *
 * Plain .csv files are accepted wherever the .gz is absent.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import * as zlib from "node:zlib";

import { UpstreamError } from "./linqs.js";
import { Splits } from "./split.js";

export interface OgbData {
  features: Float32Array;
  n: number;
  d: number;
  c: number;
  labels: Uint32Array;
  edges: Uint32Array;
  splits: Splits;
}

function readMaybeGz(base: string): string {
  if (fs.existsSync(base + ".gz")) {
    return zlib.gunzipSync(fs.readFileSync(base + ".gz")).toString("utf-8");
  }
  if (fs.existsSync(base)) {
    return fs.readFileSync(base, "utf-8");
  }
  throw new UpstreamError(`missing upstream file: ${base}[.gz]`);
}

function lines(text: string): string[] {
  return text.split("\n").map((l) => l.trim()).filter((l) => l.length > 0);
}

function findSplitDir(srcDir: string): string {
  const root = path.join(srcDir, "split");
  if (!fs.existsSync(root)) {
    throw new UpstreamError(`missing split directory under ${srcDir}`);
  }
  const entries = fs
    .readdirSync(root, { withFileTypes: true })
    .filter((e) => e.isDirectory())
    .map((e) => e.name)
    .sort();
  if (entries.length === 0) {
    throw new UpstreamError("split directory holds no scheme subdirectory");
  }
  return path.join(root, entries[0]);
}

export function parseOgb(srcDir: string): OgbData {
  const raw = path.join(srcDir, "raw");
  const featLines = lines(readMaybeGz(path.join(raw, "node-feat.csv")));
  const n = featLines.length;
  const d = featLines[0].split(",").length;
  const features = new Float32Array(n * d);
  featLines.forEach((line, i) => {
    const cols = line.split(",");
    if (cols.length !== d) {
      throw new UpstreamError(`node-feat line ${i + 1}: ragged row`);
    }
    for (let j = 0; j < d; j++) {
      features[i * d + j] = Number(cols[j]);
    }
  });

  const labelLines = lines(readMaybeGz(path.join(raw, "node-label.csv")));
  if (labelLines.length !== n) {
    throw new UpstreamError(
      `node-label holds ${labelLines.length} rows, features hold ${n}`,
    );
  }
  const labels = new Uint32Array(n);
  let c = 0;
  labelLines.forEach((line, i) => {
    const v = Number(line);
    if (!Number.isInteger(v) || v < 0) {
      throw new UpstreamError(`node-label line ${i + 1}: bad class ${line}`);
    }
    labels[i] = v;
    c = Math.max(c, v + 1);
  });

  const edgeLines = lines(readMaybeGz(path.join(raw, "edge.csv")));
  const edges = new Uint32Array(edgeLines.length * 2);
  edgeLines.forEach((line, i) => {
    const [a, b] = line.split(",").map(Number);
    if (!Number.isInteger(a) || !Number.isInteger(b) || a >= n || b >= n) {
      throw new UpstreamError(`edge line ${i + 1}: bad pair ${line}`);
    }
    edges[2 * i] = a;
    edges[2 * i + 1] = b;
  });

  const splitDir = findSplitDir(srcDir);
  const part = (name: string): number[] =>
    lines(readMaybeGz(path.join(splitDir, `${name}.csv`))).map((l) => {
      const v = Number(l);
      if (!Number.isInteger(v) || v < 0 || v >= n) {
        throw new UpstreamError(`${name}.csv: bad node index ${l}`);
      }
      return v;
    });

  return {
    features,
    n,
    d,
    c,
    labels,
    edges,
    splits: { train: part("train"), valid: part("valid"), test: part("test") },
  };
}
