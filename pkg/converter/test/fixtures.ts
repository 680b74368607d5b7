/** Builders for miniature upstream trees used across the converter tests. */

import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import * as zlib from "node:zlib";

export function tempDir(tag: string): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), `conv-${tag}-`));
}

/** cora-style content/cites tree: 12 papers, 3 classes, 4 features. */
export function writeLinqsFixture(dir: string, stem: string): void {
  const classes = ["Theory", "Neural_Networks", "Genetic_Algorithms"];
  const content: string[] = [];
  for (let i = 0; i < 12; i++) {
    const feats = [i % 2, (i >> 1) % 2, 1, 0];
    content.push(`paper${i}\t${feats.join("\t")}\t${classes[i % 3]}`);
  }
  const cites = [
    "paper0\tpaper1",
    "paper1\tpaper2",
    "paper2\tpaper0",
    "paper3\tpaper4",
    "paper5\tpaper6",
    "paper7\tpaper8",
    "paper9\tpaper10",
    "paper10\tpaper11",
    "paper0\tpaper1", // duplicate on purpose
    "paperX\tpaper1", // dangling id, must be dropped
  ];
  fs.writeFileSync(path.join(dir, `${stem}.content`), content.join("\n") + "\n");
  fs.writeFileSync(path.join(dir, `${stem}.cites`), cites.join("\n") + "\n");
}

/** Pubmed-Diabetes style tab tree: 9 papers, 3 classes, 3 vocabulary terms. */
export function writePubmedFixture(dir: string): void {
  const dataDir = path.join(dir, "data");
  fs.mkdirSync(dataDir, { recursive: true });
  const header1 = "NODE\tpaper";
  const header2 =
    "cat=label:label\tnumeric:w-alpha:0.0\tnumeric:w-beta:0.0\t" +
    "numeric:w-gamma:0.0\tstring:summary:";
  const rows: string[] = [header1, header2];
  for (let i = 0; i < 9; i++) {
    const label = (i % 3) + 1;
    rows.push(
      `pm${i}\tlabel=${label}\tw-alpha=${(0.1 * i).toFixed(2)}\t` +
        `w-gamma=0.5\tsummary=w-alpha,w-gamma`,
    );
  }
  fs.writeFileSync(
    path.join(dataDir, "Pubmed-Diabetes.NODE.paper.tab"),
    rows.join("\n") + "\n",
  );
  const cites = [
    "DIRECTED\tcites",
    "edge\tpaper:",
    "0\tpaper:pm0\t|\tpaper:pm1",
    "1\tpaper:pm1\t|\tpaper:pm2",
    "2\tpaper:pm3\t|\tpaper:pm4",
    "3\tpaper:pm99\t|\tpaper:pm1", // dangling
  ];
  fs.writeFileSync(
    path.join(dataDir, "Pubmed-Diabetes.DIRECTED.cites.tab"),
    cites.join("\n") + "\n",
  );
}

/** OGB-style tree with gzipped CSVs: 10 nodes, 3 features, 4 classes. */
export function writeOgbFixture(dir: string): void {
  const raw = path.join(dir, "raw");
  const split = path.join(dir, "split", "time");
  fs.mkdirSync(raw, { recursive: true });
  fs.mkdirSync(split, { recursive: true });
  const gz = (file: string, text: string) =>
    fs.writeFileSync(file + ".gz", zlib.gzipSync(Buffer.from(text)));

  const feats: string[] = [];
  const labels: string[] = [];
  for (let i = 0; i < 10; i++) {
    feats.push([i * 0.5, 1.0, -i * 0.25].join(","));
    labels.push(String(i % 4));
  }
  gz(path.join(raw, "node-feat.csv"), feats.join("\n") + "\n");
  gz(path.join(raw, "node-label.csv"), labels.join("\n") + "\n");
  gz(
    path.join(raw, "edge.csv"),
    ["0,1", "1,2", "2,3", "4,5", "6,7", "8,9"].join("\n") + "\n",
  );
  gz(path.join(split, "train.csv"), ["0", "1", "2", "3"].join("\n") + "\n");
  gz(path.join(split, "valid.csv"), ["4", "5", "6"].join("\n") + "\n");
  gz(path.join(split, "test.csv"), ["7", "8", "9"].join("\n") + "\n");
}
