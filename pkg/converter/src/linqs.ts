/**
 * Parser for the plain-text citation archives (cora/citeseer style):
 *
 *   <name>.content  one line per paper:  id  w_1 ... w_d  class_label
 *   <name>.cites    one line per link:   cited_id  citing_id
 *
 * Node order follows the content file; string ids map to dense indices.
 * Cite lines touching unknown ids are counted and dropped (the citeseer
 * distribution references papers without content rows).
 */

import * as fs from "node:fs";
import * as path from "node:path";

export interface ParsedGraph {
  ids: string[];
  features: Float32Array;
  n: number;
  d: number;
  labelNames: string[];
  labels: Uint32Array;
  edges: Uint32Array;
  droppedEdges: number;
}

export class UpstreamError extends Error {}

function splitColumns(line: string): string[] {
  return line.split(/[\t ]+/).filter((t) => t.length > 0);
}

export function parseContentCites(srcDir: string, stem: string): ParsedGraph {
  const contentPath = path.join(srcDir, `${stem}.content`);
  const citesPath = path.join(srcDir, `${stem}.cites`);
  for (const p of [contentPath, citesPath]) {
    if (!fs.existsSync(p)) {
      throw new UpstreamError(`missing upstream file: ${p}`);
    }
  }

  const contentLines = fs
    .readFileSync(contentPath, "utf-8")
    .split("\n")
    .map((l) => l.trim())
    .filter((l) => l.length > 0);
  if (contentLines.length === 0) {
    throw new UpstreamError(`${stem}.content is empty`);
  }

  const first = splitColumns(contentLines[0]);
  const d = first.length - 2;
  if (d < 1) {
    throw new UpstreamError(`${stem}.content: rows need id, features, label`);
  }
  const n = contentLines.length;
  const ids: string[] = new Array(n);
  const index = new Map<string, number>();
  const features = new Float32Array(n * d);
  const labelIndex = new Map<string, number>();
  const labelNames: string[] = [];
  const rawLabels = new Array<number>(n);

  contentLines.forEach((line, row) => {
    const cols = splitColumns(line);
    if (cols.length !== d + 2) {
      throw new UpstreamError(
        `${stem}.content line ${row + 1}: expected ${d + 2} columns, got ${cols.length}`,
      );
    }
    const id = cols[0];
    if (index.has(id)) {
      throw new UpstreamError(`${stem}.content: duplicate id ${id}`);
    }
    index.set(id, row);
    ids[row] = id;
    for (let j = 0; j < d; j++) {
      const v = Number(cols[1 + j]);
      if (!Number.isFinite(v)) {
        throw new UpstreamError(
          `${stem}.content line ${row + 1}: bad feature value ${cols[1 + j]}`,
        );
      }
      features[row * d + j] = v;
    }
    const labelName = cols[d + 1];
    if (!labelIndex.has(labelName)) {
      labelIndex.set(labelName, labelNames.length);
      labelNames.push(labelName);
    }
    rawLabels[row] = labelIndex.get(labelName)!;
  });

  const citeLines = fs
    .readFileSync(citesPath, "utf-8")
    .split("\n")
    .map((l) => l.trim())
    .filter((l) => l.length > 0);
  const pairs: number[] = [];
  let dropped = 0;
  for (const line of citeLines) {
    const cols = splitColumns(line);
    if (cols.length !== 2) {
      throw new UpstreamError(`${stem}.cites: malformed line "${line}"`);
    }
    const a = index.get(cols[0]);
    const b = index.get(cols[1]);
    if (a === undefined || b === undefined) {
      dropped += 1; // citation into a paper without a content row
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
