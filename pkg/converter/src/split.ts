/**
 * Deterministic public-style split for the citation datasets: 20 train nodes
 * per class, 500 validation, 1000 test. The test block is the tail of the
 * node order; train scans the remaining prefix in order taking the first 20
 * of each class; validation takes the next 500 non-train nodes.
 */

import { UpstreamError } from "./linqs.js";

export interface Splits {
  train: number[];
  valid: number[];
  test: number[];
}

export function publicSplit(
  labels: Uint32Array,
  classes: number,
  validSize = 500,
  testSize = 1000,
  perClass = 20,
): Splits {
  const n = labels.length;
  const trainSize = perClass * classes;
  if (n < trainSize + validSize + testSize) {
    throw new UpstreamError(
      `dataset too small for a ${trainSize}/${validSize}/${testSize} split`,
    );
  }
  const testStart = n - testSize;
  const test = Array.from({ length: testSize }, (_, i) => testStart + i);

  const taken = new Array<number>(classes).fill(0);
  const train: number[] = [];
  for (let i = 0; i < testStart && train.length < trainSize; i++) {
    const y = labels[i];
    if (y < classes && taken[y] < perClass) {
      taken[y] += 1;
      train.push(i);
    }
  }
  if (train.length < trainSize) {
    throw new UpstreamError(
      `could not collect ${perClass} train nodes per class (got ${train.length})`,
    );
  }

  const inTrain = new Set(train);
  const valid: number[] = [];
  for (let i = 0; i < testStart && valid.length < validSize; i++) {
    if (!inTrain.has(i)) valid.push(i);
  }
  if (valid.length < validSize) {
    throw new UpstreamError("could not collect the validation block");
  }
  return { train, valid, test };
}
