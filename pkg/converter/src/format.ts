/**
 * Binary graph container format, shared with the training library.
 *
 * meta.json     {"name", "n", "e", "d", "c", "format_version": 1}
 * features.bin  "GCF1" + u64le rows + u64le cols + rows*cols f32le row-major
 * edges.bin     "GCE1" + u64le count + count x (u32le, u32le)
 * labels.bin    "GCL1" + u64le n + n x u32le (0xFFFFFFFF = unlabeled)
 * splits.json   {"train": [...], "valid": [...], "test": [...]}
 */

import * as fs from "node:fs";
import * as path from "node:path";

export const FORMAT_VERSION = 1;
export const UNLABELED = 0xffffffff;

export interface ContainerData {
  name: string;
  features: Float32Array; // row-major n x d
  n: number;
  d: number;
  c: number;
  edges: Uint32Array; // flat pairs, length 2e
  labels: Uint32Array; // length n, UNLABELED sentinel allowed
  splits: { train: number[]; valid: number[]; test: number[] };
}

export class FormatError extends Error {}

function withMagic(magic: string, payload: Buffer): Buffer {
  return Buffer.concat([Buffer.from(magic, "ascii"), payload]);
}

export function writeContainer(data: ContainerData, outDir: string): void {
  if (data.features.length !== data.n * data.d) {
    throw new FormatError("feature buffer does not match n*d");
  }
  if (data.labels.length !== data.n) {
    throw new FormatError("label count does not match n");
  }
  if (data.edges.length % 2 !== 0) {
    throw new FormatError("edge buffer must hold pairs");
  }
  fs.mkdirSync(outDir, { recursive: true });
  const e = data.edges.length / 2;

  const meta = {
    name: data.name,
    n: data.n,
    e,
    d: data.d,
    c: data.c,
    format_version: FORMAT_VERSION,
  };
  fs.writeFileSync(
    path.join(outDir, "meta.json"),
    JSON.stringify(meta, Object.keys(meta).sort(), 1) + "\n",
  );

  const fhead = Buffer.alloc(16);
  fhead.writeBigUInt64LE(BigInt(data.n), 0);
  fhead.writeBigUInt64LE(BigInt(data.d), 8);
  const fbody = Buffer.alloc(data.features.length * 4);
  for (let i = 0; i < data.features.length; i++) {
    fbody.writeFloatLE(data.features[i], i * 4);
  }
  fs.writeFileSync(
    path.join(outDir, "features.bin"),
    withMagic("GCF1", Buffer.concat([fhead, fbody])),
  );

  const ehead = Buffer.alloc(8);
  ehead.writeBigUInt64LE(BigInt(e), 0);
  const ebody = Buffer.alloc(data.edges.length * 4);
  for (let i = 0; i < data.edges.length; i++) {
    ebody.writeUInt32LE(data.edges[i], i * 4);
  }
  fs.writeFileSync(
    path.join(outDir, "edges.bin"),
    withMagic("GCE1", Buffer.concat([ehead, ebody])),
  );

  const lhead = Buffer.alloc(8);
  lhead.writeBigUInt64LE(BigInt(data.n), 0);
  const lbody = Buffer.alloc(data.n * 4);
  for (let i = 0; i < data.n; i++) {
    lbody.writeUInt32LE(data.labels[i], i * 4);
  }
  fs.writeFileSync(
    path.join(outDir, "labels.bin"),
    withMagic("GCL1", Buffer.concat([lhead, lbody])),
  );

  fs.writeFileSync(
    path.join(outDir, "splits.json"),
    JSON.stringify(data.splits, ["test", "train", "valid"].sort(), 0) + "\n",
  );
}

function readWithMagic(file: string, magic: string): Buffer {
  if (!fs.existsSync(file)) {
    throw new FormatError(`missing file: ${path.basename(file)}`);
  }
  const blob = fs.readFileSync(file);
  if (blob.subarray(0, 4).toString("ascii") !== magic) {
    throw new FormatError(`${path.basename(file)}: bad magic`);
  }
  return blob;
}

export function readContainer(dir: string): ContainerData {
  const metaPath = path.join(dir, "meta.json");
  if (!fs.existsSync(metaPath)) {
    throw new FormatError("missing file: meta.json");
  }
  const meta = JSON.parse(fs.readFileSync(metaPath, "utf-8"));
  for (const key of ["name", "n", "e", "d", "c", "format_version"]) {
    if (!(key in meta)) throw new FormatError(`meta.json: missing ${key}`);
  }
  if (meta.format_version !== FORMAT_VERSION) {
    throw new FormatError(`unsupported format_version ${meta.format_version}`);
  }
  const n = Number(meta.n);
  const d = Number(meta.d);
  const e = Number(meta.e);

  const fblob = readWithMagic(path.join(dir, "features.bin"), "GCF1");
  const rows = Number(fblob.readBigUInt64LE(4));
  const cols = Number(fblob.readBigUInt64LE(12));
  if (rows !== n || cols !== d) {
    throw new FormatError(`features.bin is ${rows}x${cols}, meta says ${n}x${d}`);
  }
  if (fblob.length !== 20 + rows * cols * 4) {
    throw new FormatError("features.bin: truncated or trailing bytes");
  }
  const features = new Float32Array(rows * cols);
  for (let i = 0; i < features.length; i++) {
    features[i] = fblob.readFloatLE(20 + i * 4);
  }

  const eblob = readWithMagic(path.join(dir, "edges.bin"), "GCE1");
  const count = Number(eblob.readBigUInt64LE(4));
  if (count !== e) {
    throw new FormatError(`edges.bin holds ${count} pairs, meta says ${e}`);
  }
  if (eblob.length !== 12 + count * 8) {
    throw new FormatError("edges.bin: truncated or trailing bytes");
  }
  const edges = new Uint32Array(count * 2);
  for (let i = 0; i < edges.length; i++) {
    edges[i] = eblob.readUInt32LE(12 + i * 4);
    if (edges[i] >= n) throw new FormatError("edges.bin: index out of range");
  }

  const lblob = readWithMagic(path.join(dir, "labels.bin"), "GCL1");
  const ln = Number(lblob.readBigUInt64LE(4));
  if (ln !== n) throw new FormatError(`labels.bin holds ${ln}, meta says ${n}`);
  if (lblob.length !== 12 + n * 4) {
    throw new FormatError("labels.bin: truncated or trailing bytes");
  }
  const labels = new Uint32Array(n);
  for (let i = 0; i < n; i++) {
    labels[i] = lblob.readUInt32LE(12 + i * 4);
    if (labels[i] !== UNLABELED && labels[i] >= meta.c) {
      throw new FormatError("labels.bin: class id out of range");
    }
  }

  const sPath = path.join(dir, "splits.json");
  if (!fs.existsSync(sPath)) throw new FormatError("missing file: splits.json");
  const splits = JSON.parse(fs.readFileSync(sPath, "utf-8"));
  for (const key of ["train", "valid", "test"]) {
    if (!Array.isArray(splits[key])) {
      throw new FormatError(`splits.json: missing mask ${key}`);
    }
  }

  return {
    name: String(meta.name),
    n,
    d,
    c: Number(meta.c),
    features,
    edges,
    labels,
    splits: { train: splits.train, valid: splits.valid, test: splits.test },
  };
}
