/** Orchestrates dataset-specific parsing into the shared container format. */

import { ContainerData, writeContainer } from "./format.js";
import { ParsedGraph, UpstreamError, parseContentCites } from "./linqs.js";
import { parseOgb } from "./ogb.js";
import { parsePubmed } from "./pubmed.js";
import { publicSplit } from "./split.js";

export const DATASETS = [
  "cora",
  "citeseer",
  "pubmed",
  "ogbn-arxiv",
  "ogbn-products",
] as const;

export type DatasetName = (typeof DATASETS)[number];

export interface SplitSizes {
  validSize?: number;
  testSize?: number;
  perClass?: number;
}

export interface ConvertReport {
  name: string;
  n: number;
  e: number;
  d: number;
  c: number;
  droppedEdges: number;
  splitSizes: { train: number; valid: number; test: number };
}

function fromCitation(
  name: string,
  parsed: ParsedGraph,
  opts?: SplitSizes,
): ContainerData {
  const c = parsed.labelNames.length;
  const splits = publicSplit(
    parsed.labels,
    c,
    opts?.validSize ?? 500,
    opts?.testSize ?? 1000,
    opts?.perClass ?? 20,
  );
  return {
    name,
    features: parsed.features,
    n: parsed.n,
    d: parsed.d,
    c,
    edges: parsed.edges,
    labels: parsed.labels,
    splits,
  };
}

export function convertDataset(
  name: DatasetName,
  srcDir: string,
  outDir: string,
  opts?: SplitSizes,
): ConvertReport {
  let data: ContainerData;
  let dropped = 0;
  if (name === "cora" || name === "citeseer") {
    const parsed = parseContentCites(srcDir, name);
    dropped = parsed.droppedEdges;
    data = fromCitation(name, parsed, opts);
  } else if (name === "pubmed") {
    const parsed = parsePubmed(srcDir);
    dropped = parsed.droppedEdges;
    data = fromCitation(name, parsed, opts);
  } else if (name === "ogbn-arxiv" || name === "ogbn-products") {
    const ogb = parseOgb(srcDir);
    data = {
      name,
      features: ogb.features,
      n: ogb.n,
      d: ogb.d,
      c: ogb.c,
      edges: ogb.edges,
      labels: ogb.labels,
      splits: ogb.splits,
    };
  } else {
    throw new UpstreamError(`unknown dataset ${name}`);
  }

  writeContainer(data, outDir);
  return {
    name,
    n: data.n,
    e: data.edges.length / 2,
    d: data.d,
    c: data.c,
    droppedEdges: dropped,
    splitSizes: {
      train: data.splits.train.length,
      valid: data.splits.valid.length,
      test: data.splits.test.length,
    },
  };
}
