/** TensorFlow.js backend selection: WASM (XNNPACK) when available, plain
 * CPU otherwise. Call once before any model work. */

import * as tf from "@tensorflow/tfjs";
import { setWasmPaths } from "@tensorflow/tfjs-backend-wasm";
import { createRequire } from "node:module";
import * as path from "node:path";

import { registerWasmTrainingKernels } from "./wasm-kernels.js";

let ready: Promise<string> | null = null;

export function initBackend(): Promise<string> {
  if (ready) return ready;
  ready = (async () => {
    try {
      const require = createRequire(import.meta.url);
      const wasmDir = path.dirname(require.resolve("@tensorflow/tfjs-backend-wasm"));
      setWasmPaths(wasmDir + path.sep);
      if (await tf.setBackend("wasm")) {
        await tf.ready();
        registerWasmTrainingKernels();
        return tf.getBackend();
      }
    } catch {
      // fall through to cpu
    }
    await tf.setBackend("cpu");
    await tf.ready();
    return tf.getBackend();
  })();
  return ready;
}
