/**
 * Ensures the desk dataset exists before the suite runs. The dataset is
 * produced by the simulation package's generator script (an external
 * interface of that package); it is cached between runs.
 */

import { execFileSync } from "node:child_process";
import * as fs from "node:fs";
import * as path from "node:path";
import { fileURLToPath } from "node:url";

const here = path.dirname(fileURLToPath(import.meta.url));

export function deskDataDir(): string {
  return process.env.USCT_DESK_DATA ?? path.join(here, "..", "testdata", "desk");
}

export default function setup(): void {
  const dir = deskDataDir();
  if (fs.existsSync(path.join(dir, "desk.manifest"))) return;
  const script = path.join(here, "..", "..", "demos", "make_desk_dataset.py");
  if (!fs.existsSync(script)) {
    throw new Error(`desk dataset missing at ${dir} and generator not found at ${script}`);
  }
  fs.mkdirSync(dir, { recursive: true });
  console.log(`generating desk dataset at ${dir} ...`);
  execFileSync("python3", [script, dir], { stdio: "inherit" });
}
