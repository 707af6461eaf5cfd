/**
 * U-Net tumor-segmentation observer.
 *
 * Maps a (normalized) speed-of-sound image to a per-pixel tumor
 * probability map. The contractive path's convolution outputs double as
 * the task-relevant feature extractor for the task-informed training loss.
 */

import * as tf from "@tensorflow/tfjs";
import * as fs from "node:fs";

import { ObserverSample } from "./data.js";
import { Rng } from "./rng.js";

export interface ObserverConfig {
  inputSize: number;
  baseFilters: number; // filters at the top level; doubles per level (depth 3)
  seed: number;
}

export interface ObserverModel {
  config: ObserverConfig;
  /** input image batch -> tumor logits */
  logits: tf.LayersModel;
  /** input image batch -> contractive-path conv outputs (6 tensors) */
  features: tf.LayersModel;
}

export function buildObserver(config: ObserverConfig): ObserverModel {
  const { inputSize, baseFilters, seed } = config;
  // downsampling via stride-2 convs and upsampling via transposed convs:
  // every op in the graph then has a WASM-trainable gradient
  const conv = (x: tf.SymbolicTensor, filters: number, s: number, name: string, strides = 1) =>
    tf.layers
      .conv2d({
        filters,
        kernelSize: 3,
        strides,
        padding: "same",
        activation: "relu",
        kernelInitializer: tf.initializers.heNormal({ seed: seed + s }),
        name,
      })
      .apply(x) as tf.SymbolicTensor;
  const up = (x: tf.SymbolicTensor, filters: number, s: number, name: string) =>
    tf.layers
      .conv2dTranspose({
        filters,
        kernelSize: 3,
        strides: 2,
        padding: "same",
        activation: "relu",
        kernelInitializer: tf.initializers.heNormal({ seed: seed + s }),
        name,
      })
      .apply(x) as tf.SymbolicTensor;

  const input = tf.input({ shape: [inputSize, inputSize, 1], name: "image" });
  const c11 = conv(input, baseFilters, 1, "enc1a");
  const c12 = conv(c11, baseFilters, 2, "enc1b");
  const c21 = conv(c12, baseFilters * 2, 3, "enc2a", 2);
  const c22 = conv(c21, baseFilters * 2, 4, "enc2b");
  const c31 = conv(c22, baseFilters * 4, 5, "enc3a", 2);
  const c32 = conv(c31, baseFilters * 4, 6, "enc3b");

  const u2 = up(c32, baseFilters * 2, 7, "up2");
  const m2 = tf.layers.concatenate().apply([u2, c22]) as tf.SymbolicTensor;
  const d21 = conv(m2, baseFilters * 2, 8, "dec2a");
  const u1 = up(d21, baseFilters, 9, "up1");
  const m1 = tf.layers.concatenate().apply([u1, c12]) as tf.SymbolicTensor;
  const d11 = conv(m1, baseFilters, 10, "dec1a");
  const logits = tf.layers
    .conv2d({
      filters: 1,
      kernelSize: 1,
      kernelInitializer: tf.initializers.glorotUniform({ seed: seed + 11 }),
      name: "logits",
    })
    .apply(d11) as tf.SymbolicTensor;

  return {
    config,
    logits: tf.model({ inputs: input, outputs: logits, name: "observer" }),
    features: tf.model({
      inputs: input,
      outputs: [c11, c12, c21, c22, c31, c32],
      name: "observer_features",
    }),
  };
}

/** Pixelwise binary cross-entropy on logits, positives up-weighted. */
export function weightedBce(labels: tf.Tensor, logits: tf.Tensor, posWeight: number): tf.Scalar {
  return tf.tidy(() => {
    const z = logits;
    const y = labels;
    // stable log(1 + exp(-|z|)) + max(z, 0) - z*y, composed from primitive
    // ops so it runs (and differentiates) on the WASM backend
    const softplusNegAbs = tf.log(tf.exp(tf.neg(tf.abs(z))).add(1));
    const perPixel = tf.maximum(z, 0).sub(z.mul(y)).add(softplusNegAbs);
    const weights = tf.onesLike(y).add(y.mul(posWeight - 1));
    return perPixel.mul(weights).mean() as tf.Scalar;
  });
}

function flipInto(dst: Float32Array, src: ArrayLike<number>, nx: number, flipX: boolean, flipY: boolean, scale = 1): void {
  for (let x = 0; x < nx; x++) {
    const sx = flipX ? nx - 1 - x : x;
    for (let y = 0; y < nx; y++) {
      const sy = flipY ? nx - 1 - y : y;
      dst[x * nx + y] = (src[sx * nx + sy] as number) * scale;
    }
  }
}

export function samplesToTensors(
  samples: ObserverSample[],
  inputSize: number,
  flipX = false,
  flipY = false
): {
  images: tf.Tensor4D;
  masks: tf.Tensor4D;
} {
  const n = samples.length;
  const px = inputSize * inputSize;
  const img = new Float32Array(n * px);
  const msk = new Float32Array(n * px);
  samples.forEach((s, i) => {
    flipInto(img.subarray(i * px, (i + 1) * px), s.image, inputSize, flipX, flipY);
    flipInto(msk.subarray(i * px, (i + 1) * px), s.mask, inputSize, flipX, flipY);
  });
  return {
    images: tf.tensor4d(img, [n, inputSize, inputSize, 1]),
    masks: tf.tensor4d(msk, [n, inputSize, inputSize, 1]),
  };
}

export interface ObserverTrainOptions {
  epochs: number;
  batchSize: number;
  learningRate: number;
  posWeight: number;
  seed: number;
  /** random horizontal/vertical flips as augmentation */
  augment: boolean;
  onEpoch?: (epoch: number, loss: number) => void;
}

export const DEFAULT_OBSERVER_TRAIN: ObserverTrainOptions = {
  epochs: 30,
  batchSize: 10,
  learningRate: 2e-3,
  posWeight: 8.0,
  seed: 7,
  augment: true,
};

/** Train in place; returns the per-epoch mean training loss. */
export async function trainObserver(
  model: ObserverModel,
  samples: ObserverSample[],
  options: Partial<ObserverTrainOptions> = {}
): Promise<number[]> {
  const opt = { ...DEFAULT_OBSERVER_TRAIN, ...options };
  const size = model.config.inputSize;
  const optimizer = tf.train.adam(opt.learningRate);
  const rng = new Rng(opt.seed);
  const losses: number[] = [];
  const vars = model.logits.trainableWeights.map((w) => w.read() as tf.Variable);

  for (let epoch = 0; epoch < opt.epochs; epoch++) {
    const order = rng.shuffle([...samples.keys()]);
    let epochLoss = 0;
    let nBatches = 0;
    for (let start = 0; start < order.length; start += opt.batchSize) {
      const batch = order.slice(start, start + opt.batchSize).map((i) => samples[i]);
      const flipX = opt.augment && rng.next() < 0.5;
      const flipY = opt.augment && rng.next() < 0.5;
      const { images, masks } = samplesToTensors(batch, size, flipX, flipY);
      const loss = optimizer.minimize(
        () =>
          tf.tidy(() => {
            const logits = model.logits.apply(images) as tf.Tensor;
            return weightedBce(masks, logits, opt.posWeight);
          }),
        true,
        vars
      ) as tf.Scalar;
      epochLoss += (await loss.data())[0];
      nBatches++;
      loss.dispose();
      images.dispose();
      masks.dispose();
    }
    const mean = epochLoss / nBatches;
    if (!Number.isFinite(mean)) {
      optimizer.dispose();
      throw new Error(`observer training diverged at epoch ${epoch}: loss ${mean}`);
    }
    losses.push(mean);
    opt.onEpoch?.(epoch, mean);
  }
  optimizer.dispose();
  return losses;
}

/** Tumor probability maps for a batch of normalized images. */
export function observerPredict(model: ObserverModel, images: tf.Tensor4D): tf.Tensor4D {
  return tf.tidy(() => tf.sigmoid(model.logits.predict(images) as tf.Tensor4D));
}

// ---------------------------------------------------------------------------
// checkpoints: JSON header + concatenated float32 weights
// ---------------------------------------------------------------------------

export function saveObserver(model: ObserverModel, stem: string): void {
  const weights = model.logits.getWeights();
  const header = {
    kind: "observer",
    config: model.config,
    weights: weights.map((w) => ({ shape: w.shape })),
  };
  const blobs = weights.map((w) => w.dataSync() as Float32Array);
  const total = blobs.reduce((a, b) => a + b.length, 0);
  const all = new Float32Array(total);
  let at = 0;
  for (const b of blobs) {
    all.set(b, at);
    at += b.length;
  }
  fs.writeFileSync(stem + ".json", JSON.stringify(header));
  fs.writeFileSync(stem + ".bin", Buffer.from(all.buffer));
}

export function loadObserver(stem: string): ObserverModel {
  const header = JSON.parse(fs.readFileSync(stem + ".json", "utf-8"));
  if (header.kind !== "observer") throw new Error(`${stem}: not an observer checkpoint`);
  const model = buildObserver(header.config);
  const raw = fs.readFileSync(stem + ".bin");
  const all = new Float32Array(raw.buffer.slice(raw.byteOffset, raw.byteOffset + raw.byteLength));
  let at = 0;
  const tensors = header.weights.map((w: { shape: number[] }) => {
    const count = w.shape.reduce((a: number, b: number) => a * b, 1);
    const t = tf.tensor(all.subarray(at, at + count), w.shape);
    at += count;
    return t;
  });
  model.logits.setWeights(tensors);
  tensors.forEach((t: tf.Tensor) => t.dispose());
  return model;
}
