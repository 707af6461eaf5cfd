/** Shared test support: dataset path, backend init, and a pooled
 * tumor-wise AUC used as a fast cross-check next to the assessment CLI. */

import { execFileSync } from "node:child_process";
import * as path from "node:path";
import { fileURLToPath } from "node:url";

import { initBackend } from "../src/backend.js";
import { DeskDataset, loadDeskDataset } from "../src/data.js";

const here = path.dirname(fileURLToPath(import.meta.url));

export function deskDataDir(): string {
  return process.env.USCT_DESK_DATA ?? path.join(here, "..", "testdata", "desk");
}

let cached: DeskDataset | null = null;

export async function desk(): Promise<DeskDataset> {
  await initBackend();
  if (!cached) cached = loadDeskDataset(deskDataDir(), true);
  return cached;
}

/** Run the simulation package's assess command and parse its key = value block. */
export function assessCli(args: {
  est: string;
  truth: string;
  prob?: string;
  mask?: string;
  threshold?: number;
}): Record<string, number> {
  const argv = ["assess", "--est", args.est, "--truth", args.truth];
  if (args.prob) argv.push("--prob", args.prob);
  if (args.mask) argv.push("--mask", args.mask);
  if (args.threshold !== undefined) argv.push("--threshold", String(args.threshold));
  const out = execFileSync("usct", argv, { encoding: "utf-8" });
  const metrics: Record<string, number> = {};
  for (const line of out.split("\n")) {
    const m = line.match(/^(\w+) = (.+)$/);
    if (m) metrics[m[1]] = Number(m[2]);
  }
  return metrics;
}

function components(mask: ArrayLike<number>, nx: number): { labels: Int32Array; n: number } {
  const labels = new Int32Array(nx * nx);
  let n = 0;
  const stack: number[] = [];
  for (let p = 0; p < nx * nx; p++) {
    if (!mask[p] || labels[p]) continue;
    n++;
    labels[p] = n;
    stack.push(p);
    while (stack.length) {
      const q = stack.pop()!;
      const qx = Math.floor(q / nx);
      const qy = q % nx;
      for (let dx = -1; dx <= 1; dx++) {
        for (let dy = -1; dy <= 1; dy++) {
          const rx = qx + dx;
          const ry = qy + dy;
          if (rx < 0 || ry < 0 || rx >= nx || ry >= nx) continue;
          const r = rx * nx + ry;
          if (mask[r] && !labels[r]) {
            labels[r] = n;
            stack.push(r);
          }
        }
      }
    }
  }
  return { labels, n };
}

/** Tumor-wise TPR vs pixel-wise FPR, pooled over a set of images. */
export function pooledTumorAuc(
  probs: ArrayLike<number>[],
  masks: ArrayLike<number>[],
  nx: number
): number {
  const tumorMax: number[] = [];
  const outside: number[] = [];
  for (let s = 0; s < probs.length; s++) {
    const { labels, n } = components(masks[s], nx);
    const localMax = new Array<number>(n).fill(-1);
    for (let p = 0; p < nx * nx; p++) {
      const v = probs[s][p] as number;
      if (labels[p]) localMax[labels[p] - 1] = Math.max(localMax[labels[p] - 1], v);
      else outside.push(v);
    }
    tumorMax.push(...localMax);
  }
  outside.sort((a, b) => a - b);
  const taus = [...new Set([...tumorMax, 0, 1])].sort((a, b) => b - a);
  const pts: Array<[number, number]> = taus.map((t) => {
    let lo = 0;
    let hi = outside.length;
    while (lo < hi) {
      const m = (lo + hi) >> 1;
      if (outside[m] < t) lo = m + 1;
      else hi = m;
    }
    const fpr = (outside.length - lo) / outside.length;
    const tpr = tumorMax.filter((x) => x >= t).length / tumorMax.length;
    return [fpr, tpr];
  });
  pts.unshift([0, 0]);
  pts.push([1, 1]);
  pts.sort((a, b) => a[0] - b[0] || a[1] - b[1]);
  let auc = 0;
  for (let i = 1; i < pts.length; i++) {
    auc += (pts[i][0] - pts[i - 1][0]) * ((pts[i][1] + pts[i - 1][1]) / 2);
  }
  return auc;
}
