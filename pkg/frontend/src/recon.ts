/**
 * Learned waveform-to-image reconstruction.
 *
 * An encoder-decoder network maps a (possibly source-encoded) waveform
 * tensor (time, receiver, channel) to a speed-of-sound image. Training
 * minimizes the task-informed loss over a non-decreasing gamma schedule,
 * each stage continuing from the previous stage's weights; online Gaussian
 * noise on the raw per-source channels (composed *before* encoding) is the
 * data augmentation.
 *
 * Encoder modes: 'reference' feeds all physical sources, 'subsample' and
 * 'random-fixed' contract them with a fixed matrix, 'learned' makes the
 * matrix a trainable variable optimized jointly with the network.
 */

import * as tf from "@tensorflow/tfjs";
import * as fs from "node:fs";

import { DeskDataset, EncoderMode, ReconSample, addOnlineNoise, modeEncoder } from "./data.js";
import { FeatureFn, mseLoss, taskInformedLoss } from "./losses.js";
import { ObserverModel } from "./observer.js";
import { Rng } from "./rng.js";

export interface TrainConfig {
  encoderMode: EncoderMode;
  lChannels: number;
  /** non-decreasing; Infinity means the image term is dropped */
  gammaSchedule: number[];
  epochsPerStage: number;
  batchSize: number;
  /** SNR of the online noise augmentation, or null to disable */
  onlineNoiseSnrDb: number | null;
  learningRate: number;
  /** optimize the encoding matrix in 'learned' mode */
  trainEncoder: boolean;
  /** initialize the learned matrix: gaussian, or identity (requires L = I) */
  learnedInit: "gaussian" | "identity";
  valCount: number;
  seed: number;
}

export const DEFAULT_TRAIN_CONFIG: TrainConfig = {
  encoderMode: "random-fixed",
  lChannels: 4,
  gammaSchedule: [0, 1e-3, 1e-2, 1e-1, 1, 10, Infinity],
  epochsPerStage: 10,
  batchSize: 8,
  onlineNoiseSnrDb: 30.0,
  learningRate: 1e-4,
  trainEncoder: true,
  learnedInit: "gaussian",
  valCount: 8,
  seed: 11,
};

export function validateTrainConfig(config: TrainConfig, nSources: number): void {
  for (let i = 1; i < config.gammaSchedule.length; i++) {
    if (!(config.gammaSchedule[i] >= config.gammaSchedule[i - 1])) {
      throw new Error(`gamma schedule must be non-decreasing, got ${config.gammaSchedule}`);
    }
  }
  if (config.gammaSchedule.some((g) => g < 0 || Number.isNaN(g))) {
    throw new Error(`gamma values must be in [0, Infinity]`);
  }
  if (config.encoderMode === "reference" && config.lChannels !== nSources) {
    throw new Error(`reference mode uses all ${nSources} channels; set lChannels accordingly`);
  }
  if (config.learnedInit === "identity" && config.lChannels !== nSources) {
    throw new Error(`identity initialization requires L = I = ${nSources}`);
  }
}

export interface ReconModel {
  net: tf.LayersModel;
  /** trainable or fixed encoding matrix [L, I]; null in reference mode */
  encoderMatrix: tf.Variable | tf.Tensor | null;
  encoderMode: EncoderMode;
  lChannels: number;
  /** raw-waveform scale divisor fixed from the training split */
  waveScale: number;
  inputShape: [number, number, number]; // steps, receivers, channels
  outputSize: number;
  seed: number;
}

export function buildReconNet(
  nSteps: number,
  nReceivers: number,
  channels: number,
  outputSize: number,
  seed: number
): tf.LayersModel {
  const init = (s: number) => tf.initializers.heNormal({ seed: seed + s });
  const input = tf.input({ shape: [nSteps, nReceivers, channels], name: "waveform" });
  let x = tf.layers
    .conv2d({ filters: 16, kernelSize: [5, 3], strides: [2, 1], padding: "same",
              activation: "relu", kernelInitializer: init(1), name: "wenc1" })
    .apply(input) as tf.SymbolicTensor;
  x = tf.layers
    .conv2d({ filters: 24, kernelSize: 3, strides: 2, padding: "same",
              activation: "relu", kernelInitializer: init(2), name: "wenc2" })
    .apply(x) as tf.SymbolicTensor;
  x = tf.layers
    .conv2d({ filters: 32, kernelSize: 3, strides: 2, padding: "same",
              activation: "relu", kernelInitializer: init(3), name: "wenc3" })
    .apply(x) as tf.SymbolicTensor;
  x = tf.layers
    .conv2d({ filters: 48, kernelSize: 3, strides: 2, padding: "same",
              activation: "relu", kernelInitializer: init(4), name: "wenc4" })
    .apply(x) as tf.SymbolicTensor;
  x = tf.layers.flatten().apply(x) as tf.SymbolicTensor;
  x = tf.layers
    .dense({ units: 256, activation: "relu", kernelInitializer: init(5), name: "latent" })
    .apply(x) as tf.SymbolicTensor;
  const side = outputSize / 8;
  x = tf.layers
    .dense({ units: side * side * 32, activation: "relu", kernelInitializer: init(6), name: "seed" })
    .apply(x) as tf.SymbolicTensor;
  x = tf.layers.reshape({ targetShape: [side, side, 32] }).apply(x) as tf.SymbolicTensor;
  for (const [i, filters] of [24, 16, 8].entries()) {
    x = tf.layers
      .conv2dTranspose({ filters, kernelSize: 3, strides: 2, padding: "same",
                         activation: "relu", kernelInitializer: init(7 + i),
                         name: `wdec${i + 1}` })
      .apply(x) as tf.SymbolicTensor;
  }
  const out = tf.layers
    .conv2d({ filters: 1, kernelSize: 3, padding: "same",
              kernelInitializer: init(10), name: "image" })
    .apply(x) as tf.SymbolicTensor;
  return tf.model({ inputs: input, outputs: out, name: "reconstructor" });
}

/** Raw (sources, steps, receivers) batch -> network input (steps, receivers, channels). */
export function encodeInput(
  raw: tf.Tensor4D, // [B, I, K, J]
  model: Pick<ReconModel, "encoderMatrix" | "encoderMode" | "waveScale">
): tf.Tensor4D {
  return tf.tidy(() => {
    const scaled = raw.div(model.waveScale);
    const channelsLast = scaled.transpose([0, 2, 3, 1]); // [B, K, J, I]
    if (model.encoderMatrix === null) return channelsLast as tf.Tensor4D;
    // out[b,k,j,l] = sum_i W[l,i] * in[b,k,j,i], as a flat matmul so it
    // stays on ops every backend implements
    const [B, K, J, I] = channelsLast.shape as [number, number, number, number];
    const w = model.encoderMatrix as tf.Tensor2D; // [L, I]
    const flat = channelsLast.reshape([B * K * J, I]);
    const mixed = tf.matMul(flat, w, false, true); // [B*K*J, L]
    return mixed.reshape([B, K, J, w.shape[0]]) as tf.Tensor4D;
  });
}

export function reconPredict(model: ReconModel, raw: tf.Tensor4D): tf.Tensor4D {
  return tf.tidy(() => model.net.predict(encodeInput(raw, model)) as tf.Tensor4D);
}

function rawBatch(samples: ReconSample[], shape: [number, number, number]): tf.Tensor4D {
  const [I, K, J] = shape;
  const buf = new Float32Array(samples.length * I * K * J);
  samples.forEach((s, i) => buf.set(s.waveform, i * I * K * J));
  return tf.tensor4d(buf, [samples.length, I, K, J]);
}

function imageBatch(samples: ReconSample[], size: number): tf.Tensor4D {
  const buf = new Float32Array(samples.length * size * size);
  samples.forEach((s, i) => buf.set(s.image, i * size * size));
  return tf.tensor4d(buf, [samples.length, size, size, 1]);
}

export function makeReconModel(dataset: DeskDataset, config: TrainConfig): ReconModel {
  const { nTransmitters: I, nSteps: K, nReceivers: J, nx } = dataset.config;
  validateTrainConfig(config, I);
  const channels = config.encoderMode === "reference" ? I : config.lChannels;

  let encoderMatrix: tf.Variable | tf.Tensor | null = null;
  if (config.encoderMode === "learned") {
    let init: tf.Tensor;
    if (config.learnedInit === "identity") {
      init = tf.eye(I);
    } else {
      const rng = new Rng(config.seed + 1000);
      const buf = new Float32Array(config.lChannels * I);
      rng.fillGaussian(buf, 1.0);
      init = tf.tensor2d(buf, [config.lChannels, I]);
    }
    encoderMatrix = tf.variable(init, config.trainEncoder, "encoder_matrix");
  } else {
    const fixed = modeEncoder(dataset, config.encoderMode, config.lChannels);
    if (fixed !== null) {
      encoderMatrix = tf.tensor2d(fixed, [config.lChannels, I]);
    }
  }

  // scale fixed from the raw training split so eval and inference match
  const trainSamples = dataset.recon.slice(0, dataset.recon.length - config.valCount);
  let sumSq = 0;
  let count = 0;
  for (const s of trainSamples) {
    for (let i = 0; i < s.waveform.length; i++) sumSq += s.waveform[i] * s.waveform[i];
    count += s.waveform.length;
  }
  const waveScale = Math.sqrt(sumSq / count) || 1.0;

  return {
    net: buildReconNet(K, J, channels, nx, config.seed),
    encoderMatrix,
    encoderMode: config.encoderMode,
    lChannels: channels,
    waveScale,
    inputShape: [K, J, channels],
    outputSize: nx,
    seed: config.seed,
  };
}

export interface EpochRecord {
  stage: number;
  gamma: number;
  epoch: number;
  trainLoss: number;
  valCombined: number;
  valMse: number;
}

export interface StageRecord {
  stage: number;
  gamma: number;
  /** val loss under this stage's gamma before its first epoch */
  valStart: number;
  /** val loss under the previous stage's gamma, before the first epoch */
  valStartPrevGamma: number | null;
  /** val loss under this stage's gamma after the last epoch */
  valEnd: number;
  epochs: EpochRecord[];
}

export interface TrainResult {
  model: ReconModel;
  stages: StageRecord[];
}

/** Metric log in the same plain-text record style as the iterative solver. */
export function formatMetricLog(stages: StageRecord[]): string {
  const lines = ["# stage gamma epoch train_loss val_combined val_mse"];
  for (const st of stages) {
    for (const e of st.epochs) {
      lines.push(
        `${st.stage} ${st.gamma} ${e.epoch} ${e.trainLoss} ${e.valCombined} ${e.valMse}`
      );
    }
  }
  return lines.join("\n") + "\n";
}

export async function trainReconstructor(
  dataset: DeskDataset,
  observer: ObserverModel,
  config: TrainConfig,
  options: {
    onEpoch?: (rec: EpochRecord) => void;
    checkpointStem?: string;
  } = {}
): Promise<TrainResult> {
  const model = makeReconModel(dataset, config);
  const { nTransmitters: I, nSteps: K, nReceivers: J, nx } = dataset.config;
  const split = dataset.recon.length - config.valCount;
  const train = dataset.recon.slice(0, split);
  const val = dataset.recon.slice(split);
  if (train.length === 0 || val.length === 0) {
    throw new Error(`need both train and validation samples, got ${split}/${val.length}`);
  }

  const features: FeatureFn = (imgs) => observer.features.apply(imgs) as tf.Tensor[];
  const valRaw = rawBatch(val, [I, K, J]);
  const valImg = imageBatch(val, nx);

  const evalLoss = (gamma: number): { combined: number; mse: number } =>
    tf.tidy(() => {
      const pred = model.net.apply(encodeInput(valRaw, model)) as tf.Tensor4D;
      const combined = taskInformedLoss(pred, valImg, features, gamma);
      const mse = mseLoss(pred, valImg);
      return { combined: combined.dataSync()[0], mse: mse.dataSync()[0] };
    });

  const optimizer = tf.train.adam(config.learningRate);
  const netVars = model.net.trainableWeights.map((w) => w.read() as tf.Variable);
  const vars =
    model.encoderMode === "learned" && config.trainEncoder
      ? [...netVars, model.encoderMatrix as tf.Variable]
      : netVars;
  const rng = new Rng(config.seed);
  const stages: StageRecord[] = [];

  for (let stageIdx = 0; stageIdx < config.gammaSchedule.length; stageIdx++) {
    const gamma = config.gammaSchedule[stageIdx];
    const prevGamma = stageIdx > 0 ? config.gammaSchedule[stageIdx - 1] : null;
    const record: StageRecord = {
      stage: stageIdx,
      gamma,
      valStart: evalLoss(gamma).combined,
      valStartPrevGamma: prevGamma === null ? null : evalLoss(prevGamma).combined,
      valEnd: NaN,
      epochs: [],
    };

    for (let epoch = 0; epoch < config.epochsPerStage; epoch++) {
      const order = rng.shuffle([...train.keys()]);
      let epochLoss = 0;
      let nBatches = 0;
      for (let at = 0; at < order.length; at += config.batchSize) {
        const batchSamples = order.slice(at, at + config.batchSize).map((i) => train[i]);
        const noisy = batchSamples.map((s) =>
          config.onlineNoiseSnrDb === null
            ? s.waveform
            : addOnlineNoise(s.waveform, config.onlineNoiseSnrDb, rng)
        );
        const buf = new Float32Array(noisy.length * I * K * J);
        noisy.forEach((w, i) => buf.set(w, i * I * K * J));
        const raw = tf.tensor4d(buf, [noisy.length, I, K, J]);
        const img = imageBatch(batchSamples, nx);
        const loss = optimizer.minimize(
          () =>
            taskInformedLoss(
              model.net.apply(encodeInput(raw, model)) as tf.Tensor4D,
              img,
              features,
              gamma
            ),
          true,
          vars
        ) as tf.Scalar;
        const value = (await loss.data())[0];
        loss.dispose();
        raw.dispose();
        img.dispose();
        if (!Number.isFinite(value)) {
          optimizer.dispose();
          throw new Error(
            `training diverged at stage ${stageIdx} (gamma=${gamma}), epoch ${epoch}`
          );
        }
        epochLoss += value;
        nBatches++;
      }
      const { combined, mse } = evalLoss(gamma);
      const rec: EpochRecord = {
        stage: stageIdx,
        gamma,
        epoch,
        trainLoss: epochLoss / nBatches,
        valCombined: combined,
        valMse: mse,
      };
      record.epochs.push(rec);
      options.onEpoch?.(rec);
    }

    record.valEnd = evalLoss(gamma).combined;
    stages.push(record);
    if (options.checkpointStem) {
      saveRecon(model, `${options.checkpointStem}_stage${stageIdx}`);
    }
  }
  optimizer.dispose();
  valRaw.dispose();
  valImg.dispose();
  return { model, stages };
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

export function saveRecon(model: ReconModel, stem: string): void {
  const weights = model.net.getWeights();
  const enc = model.encoderMatrix === null ? null : (model.encoderMatrix.dataSync() as Float32Array);
  const header = {
    kind: "reconstructor",
    encoderMode: model.encoderMode,
    lChannels: model.lChannels,
    waveScale: model.waveScale,
    inputShape: model.inputShape,
    outputSize: model.outputSize,
    seed: model.seed,
    encoderShape: model.encoderMatrix === null ? null : model.encoderMatrix.shape,
    weights: weights.map((w) => ({ shape: w.shape })),
  };
  const blobs = weights.map((w) => w.dataSync() as Float32Array);
  if (enc !== null) blobs.push(enc);
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

export function loadRecon(stem: string): ReconModel {
  const header = JSON.parse(fs.readFileSync(stem + ".json", "utf-8"));
  if (header.kind !== "reconstructor") throw new Error(`${stem}: not a reconstructor checkpoint`);
  const [K, J, channels] = header.inputShape;
  const net = buildReconNet(K, J, channels, header.outputSize, header.seed);
  const raw = fs.readFileSync(stem + ".bin");
  const all = new Float32Array(raw.buffer.slice(raw.byteOffset, raw.byteOffset + raw.byteLength));
  let at = 0;
  const tensors = header.weights.map((w: { shape: number[] }) => {
    const count = w.shape.reduce((a: number, b: number) => a * b, 1);
    const t = tf.tensor(all.subarray(at, at + count), w.shape);
    at += count;
    return t;
  });
  net.setWeights(tensors);
  tensors.forEach((t: tf.Tensor) => t.dispose());
  let encoderMatrix: tf.Tensor | null = null;
  if (header.encoderShape !== null) {
    const count = header.encoderShape[0] * header.encoderShape[1];
    encoderMatrix = tf.tensor2d(all.subarray(at, at + count), header.encoderShape);
  }
  return {
    net,
    encoderMatrix,
    encoderMode: header.encoderMode,
    lChannels: header.lChannels,
    waveScale: header.waveScale,
    inputShape: header.inputShape,
    outputSize: header.outputSize,
    seed: header.seed,
  };
}
