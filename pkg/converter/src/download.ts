/** Best-effort upstream fetch for --download; requires network access. */

import * as fs from "node:fs";
import * as https from "node:https";
import * as path from "node:path";

import { UpstreamError } from "./linqs.js";
import { DatasetName } from "./convert.js";

const SOURCES: Record<string, string[]> = {
  cora: ["https://linqs-data.soe.ucsc.edu/public/lbc/cora.tgz"],
  citeseer: ["https://linqs-data.soe.ucsc.edu/public/lbc/citeseer.tgz"],
  pubmed: ["https://linqs-data.soe.ucsc.edu/public/Pubmed-Diabetes.tgz"],
  "ogbn-arxiv": ["http://snap.stanford.edu/ogb/data/nodeproppred/arxiv.zip"],
  "ogbn-products": [
    "http://snap.stanford.edu/ogb/data/nodeproppred/products.zip",
  ],
};

function fetch(url: string, dest: string): Promise<void> {
  return new Promise((resolve, reject) => {
    const file = fs.createWriteStream(dest);
    https
      .get(url, (res) => {
        if (res.statusCode !== 200) {
          reject(new UpstreamError(`${url}: HTTP ${res.statusCode}`));
          return;
        }
        res.pipe(file);
        file.on("finish", () => file.close(() => resolve()));
      })
      .on("error", (err) => reject(new UpstreamError(`${url}: ${err.message}`)));
  });
}

export async function downloadDataset(
  name: DatasetName,
  destDir: string,
): Promise<string> {
  const urls = SOURCES[name];
  if (!urls) throw new UpstreamError(`no download source for ${name}`);
  fs.mkdirSync(destDir, { recursive: true });
  const url = urls[0];
  const archive = path.join(destDir, path.basename(url));
  await fetch(url, archive);
  return archive; // extraction is left to the operator (tar/unzip)
}
