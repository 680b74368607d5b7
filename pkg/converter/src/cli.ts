/**
 * convert --dataset <name> --src <dir> --out <dir> [--download]
 * verify  --path <dir>
 */

import { DATASETS, DatasetName, convertDataset } from "./convert.js";
import { downloadDataset } from "./download.js";
import { UpstreamError } from "./linqs.js";
import { FormatError } from "./format.js";
import { verifyContainer } from "./verify.js";

function parseFlags(argv: string[]): Map<string, string | boolean> {
  const flags = new Map<string, string | boolean>();
  for (let i = 0; i < argv.length; i++) {
    const tok = argv[i];
    if (!tok.startsWith("--")) {
      throw new UpstreamError(`unexpected argument ${tok}`);
    }
    const key = tok.slice(2);
    if (i + 1 < argv.length && !argv[i + 1].startsWith("--")) {
      flags.set(key, argv[i + 1]);
      i++;
    } else {
      flags.set(key, true);
    }
  }
  return flags;
}

function need(flags: Map<string, string | boolean>, key: string): string {
  const v = flags.get(key);
  if (typeof v !== "string") {
    throw new UpstreamError(`missing required flag --${key}`);
  }
  return v;
}

export async function main(argv: string[]): Promise<number> {
  const [command, ...rest] = argv;
  try {
    if (command === "convert") {
      const flags = parseFlags(rest);
      const name = need(flags, "dataset") as DatasetName;
      if (!DATASETS.includes(name)) {
        throw new UpstreamError(
          `unknown dataset ${name}; expected one of ${DATASETS.join(", ")}`,
        );
      }
      const out = need(flags, "out");
      let src = flags.get("src");
      if (flags.get("download")) {
        const dest = typeof src === "string" ? src : `downloads/${name}`;
        const archive = await downloadDataset(name, dest);
        console.log(`downloaded ${archive}; extract it and re-run with --src`);
        return 0;
      }
      if (typeof src !== "string") {
        throw new UpstreamError("missing required flag --src (or --download)");
      }
      const report = convertDataset(name, src, out);
      console.log(
        `${report.name}: n=${report.n} e=${report.e} d=${report.d} ` +
          `c=${report.c} split=${report.splitSizes.train}/` +
          `${report.splitSizes.valid}/${report.splitSizes.test} ` +
          `dropped_edges=${report.droppedEdges} -> ${out}`,
      );
      return 0;
    }
    if (command === "verify") {
      const flags = parseFlags(rest);
      const report = verifyContainer(need(flags, "path"));
      for (const line of report.lines) console.log(line);
      return report.ok ? 0 : 1;
    }
    console.error("usage: convert --dataset <name> --src <dir> --out <dir>");
    console.error("       verify --path <dir>");
    return 2;
  } catch (err) {
    if (err instanceof UpstreamError || err instanceof FormatError) {
      console.error(`error: ${err.message}`);
      return 2;
    }
    throw err;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url.endsWith(process.argv[1].split("/").pop() ?? "");
if (invokedDirectly) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
