/**
 * Container verification: structural checks plus symmetry/dedup statistics.
 * Returns a line-oriented report; any violation marks the report failed.
 */

import { readContainer, UNLABELED } from "./format.js";

export interface VerifyReport {
  ok: boolean;
  lines: string[];
}

export function verifyContainer(dir: string): VerifyReport {
  const lines: string[] = [];
  let ok = true;
  const fail = (msg: string) => {
    ok = false;
    lines.push(`FAIL ${msg}`);
  };

  let data;
  try {
    data = readContainer(dir);
  } catch (err) {
    return { ok: false, lines: [`FAIL ${(err as Error).message}`] };
  }

  lines.push(`name ${data.name}`);
  lines.push(`nodes ${data.n}`);
  lines.push(`features ${data.d}`);
  lines.push(`classes ${data.c}`);
  lines.push(`stored_edges ${data.edges.length / 2}`);

  // symmetrized/deduplicated edge count, as the trainer will see the graph
  const seen = new Set<number>();
  let selfLoops = 0;
  for (let i = 0; i < data.edges.length; i += 2) {
    const a = data.edges[i];
    const b = data.edges[i + 1];
    if (a === b) {
      selfLoops += 1;
      continue;
    }
    const lo = Math.min(a, b);
    const hi = Math.max(a, b);
    seen.add(lo * data.n + hi);
  }
  lines.push(`unique_undirected_edges ${seen.size}`);
  lines.push(`self_loops_in_input ${selfLoops}`);

  let labeled = 0;
  for (const y of data.labels) {
    if (y !== UNLABELED) labeled += 1;
  }
  lines.push(`labeled_nodes ${labeled}`);

  const names = ["train", "valid", "test"] as const;
  const taken = new Set<number>();
  for (const name of names) {
    const mask = data.splits[name];
    lines.push(`${name}_size ${mask.length}`);
    for (const idx of mask) {
      if (!Number.isInteger(idx) || idx < 0 || idx >= data.n) {
        fail(`${name} mask index out of range: ${idx}`);
        break;
      }
      if (taken.has(idx)) {
        fail(`${name} mask overlaps another mask at node ${idx}`);
        break;
      }
      taken.add(idx);
    }
  }

  for (const name of ["train", "valid"] as const) {
    const unlabeled = data.splits[name].filter(
      (i) => data.labels[i] === UNLABELED,
    );
    if (unlabeled.length > 0) {
      fail(`${name} mask references ${unlabeled.length} unlabeled node(s)`);
    }
  }

  lines.push(ok ? "OK all checks passed" : "FAILED see messages above");
  return { ok, lines };
}
