import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import * as tf from "@tensorflow/tfjs";
import { beforeAll, describe, expect, it } from "vitest";

import { splitIndices } from "../src/data.js";
import {
  buildObserver,
  loadObserver,
  observerPredict,
  samplesToTensors,
  saveObserver,
  trainObserver,
} from "../src/observer.js";
import { desk } from "./helpers.js";

const tmp = fs.mkdtempSync(path.join(os.tmpdir(), "usct-obs-"));

beforeAll(async () => {
  await desk();
});

describe("U-Net observer", () => {
  it("maps an image to an equally-sized probability map in [0, 1]", async () => {
    const ds = await desk();
    const model = buildObserver({ inputSize: ds.config.nx, baseFilters: 4, seed: 3 });
    const { images } = samplesToTensors(ds.observer.slice(0, 2), ds.config.nx);
    const prob = observerPredict(model, images);
    expect(prob.shape).toEqual([2, ds.config.nx, ds.config.nx, 1]);
    const values = prob.dataSync();
    expect(Math.min(...values)).toBeGreaterThanOrEqual(0);
    expect(Math.max(...values)).toBeLessThanOrEqual(1);
  });

  it("feature extraction is deterministic and continuous", async () => {
    const ds = await desk();
    const model = buildObserver({ inputSize: ds.config.nx, baseFilters: 4, seed: 3 });
    const { images } = samplesToTensors(ds.observer.slice(0, 1), ds.config.nx);
    const fa = model.features.apply(images) as tf.Tensor[];
    const fb = model.features.apply(images.clone()) as tf.Tensor[];
    expect(fa.length).toBe(6); // two conv outputs per contractive level
    for (let i = 0; i < fa.length; i++) {
      expect(Array.from(fa[i].dataSync())).toEqual(Array.from(fb[i].dataSync()));
    }
    // continuity: a small input perturbation moves features only slightly
    const eps = 1e-4;
    const fc = model.features.apply(images.add(eps)) as tf.Tensor[];
    for (let i = 0; i < fa.length; i++) {
      const diff = tf.max(tf.abs(fc[i].sub(fa[i]))).dataSync()[0];
      expect(diff).toBeLessThan(0.05);
      expect(diff).toBeGreaterThanOrEqual(0);
    }
  });

  it("overfits a single sample to near-zero cross-entropy", async () => {
    const ds = await desk();
    const model = buildObserver({ inputSize: ds.config.nx, baseFilters: 6, seed: 5 });
    const losses = await trainObserver(model, [ds.observer[0]], {
      epochs: 120,
      batchSize: 1,
      learningRate: 3e-3,
      augment: false,
      posWeight: 1.0,
      seed: 1,
    });
    expect(losses[losses.length - 1]).toBeLessThan(0.01);
  });

  it("collapses to near-zero output when every mask is empty", async () => {
    const ds = await desk();
    const degenerate = ds.observer.slice(0, 12).map((s) => ({
      ...s,
      mask: new Uint8Array(s.mask.length), // all background
    }));
    const model = buildObserver({ inputSize: ds.config.nx, baseFilters: 4, seed: 9 });
    await trainObserver(model, degenerate, {
      epochs: 25,
      batchSize: 6,
      learningRate: 3e-3,
      augment: false,
      posWeight: 1.0,
      seed: 2,
    });
    const { images } = samplesToTensors(degenerate, ds.config.nx);
    const mean = tf.mean(observerPredict(model, images)).dataSync()[0];
    expect(mean).toBeLessThan(0.05);
  });

  it("checkpoints restore the exact function", async () => {
    const ds = await desk();
    const model = buildObserver({ inputSize: ds.config.nx, baseFilters: 4, seed: 13 });
    await trainObserver(model, ds.observer.slice(0, 4), {
      epochs: 2,
      batchSize: 2,
      augment: false,
      seed: 3,
    });
    const stem = path.join(tmp, "obs");
    saveObserver(model, stem);
    const back = loadObserver(stem);
    const { images } = samplesToTensors(ds.observer.slice(4, 6), ds.config.nx);
    const a = observerPredict(model, images).dataSync();
    const b = observerPredict(back, images).dataSync();
    expect(Array.from(b)).toEqual(Array.from(a));
  });

  it("training split never sees the held-out phantoms", async () => {
    const ds = await desk();
    const { train, held } = splitIndices(ds.observer.length, 50);
    expect(held.length).toBe(50);
    expect(new Set([...train, ...held]).size).toBe(ds.observer.length);
    expect(Math.min(...held)).toBeGreaterThan(Math.max(...train));
  });
});
