/**
 * Parser for the Pubmed-Diabetes tab distribution:
 *
 *   data/Pubmed-Diabetes.NODE.paper.tab
 *     two header lines, then:  id  label=<k>  w-<term>=<tfidf> ...  summary=...
 *   data/Pubmed-Diabetes.DIRECTED.cites.tab
 *     two header lines, then:  eid  paper:<id>  |  paper:<id>
 *
 * The vocabulary (feature order) comes from the second header line of the
 * NODE file, which lists `numeric:w-<term>:0.0` declarations.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { ParsedGraph, UpstreamError } from "./linqs.js";

const NODE_FILE = "Pubmed-Diabetes.NODE.paper.tab";
const CITES_FILE = "Pubmed-Diabetes.DIRECTED.cites.tab";

function locate(srcDir: string, file: string): string {
  for (const candidate of [path.join(srcDir, file),
                           path.join(srcDir, "data", file)]) {
    if (fs.existsSync(candidate)) return candidate;
  }
  throw new UpstreamError(`missing upstream file: ${file} under ${srcDir}`);
}

export function parsePubmed(srcDir: string): ParsedGraph {
  const nodePath = locate(srcDir, NODE_FILE);
  const citesPath = locate(srcDir, CITES_FILE);

  const nodeLines = fs.readFileSync(nodePath, "utf-8").split("\n");
  if (nodeLines.length < 3) {
    throw new UpstreamError("NODE file too short");
  }
  const vocabDecl = nodeLines[1].trim().split(/\t/);
  const vocab = new Map<string, number>();
  for (const decl of vocabDecl) {
    const m = decl.match(/^numeric:(w-[^:]+):/);
    if (m) vocab.set(m[1], vocab.size);
  }
  if (vocab.size === 0) {
    throw new UpstreamError("NODE file declares no w-* vocabulary");
  }
  const d = vocab.size;

  const ids: string[] = [];
  const index = new Map<string, number>();
  const rows: Array<Map<number, number>> = [];
  const rawLabels: number[] = [];
  let maxLabel = 0;
  for (const raw of nodeLines.slice(2)) {
    const line = raw.trim();
    if (!line) continue;
    const cols = line.split(/\t/);
    const id = cols[0];
    if (index.has(id)) throw new UpstreamError(`duplicate id ${id}`);
    let label = -1;
    const feats = new Map<number, number>();
    for (const tok of cols.slice(1)) {
      if (tok.startsWith("label=")) {
        label = Number(tok.slice("label=".length));
      } else if (tok.startsWith("summary=")) {
        continue;
      } else {
        const eq = tok.indexOf("=");
        if (eq < 0) continue;
        const key = tok.slice(0, eq);
        const col = vocab.get(key);
        if (col !== undefined) feats.set(col, Number(tok.slice(eq + 1)));
      }
    }
    if (label < 1) {
      throw new UpstreamError(`node ${id}: missing label= field`);
    }
    index.set(id, ids.length);
    ids.push(id);
    rows.push(feats);
    rawLabels.push(label - 1); // upstream labels are 1-based
    maxLabel = Math.max(maxLabel, label - 1);
  }

  const n = ids.length;
  const features = new Float32Array(n * d);
  rows.forEach((feats, row) => {
    for (const [col, value] of feats) features[row * d + col] = value;
  });
  const labelNames = Array.from({ length: maxLabel + 1 },
                                (_, k) => String(k + 1));

  const pairs: number[] = [];
  let dropped = 0;
  for (const raw of fs.readFileSync(citesPath, "utf-8").split("\n").slice(2)) {
    const line = raw.trim();
    if (!line) continue;
    const m = line.match(/paper:(\S+)\s*\|\s*paper:(\S+)/);
    if (!m) throw new UpstreamError(`cites: malformed line "${line}"`);
    const a = index.get(m[1]);
    const b = index.get(m[2]);
    if (a === undefined || b === undefined) {
      dropped += 1;
      continue;
    }
    pairs.push(a, b);
  }

  return {
    ids,
    features,
    n,
    d,
    labelNames,
    labels: Uint32Array.from(rawLabels),
    edges: Uint32Array.from(pairs),
    droppedEdges: dropped,
  };
}
