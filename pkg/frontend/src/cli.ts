/**
 * Trainer command line: `train-observer`, `train-recon`, `infer`.
 *
 * Consumes the desk dataset directory written by the simulation side
 * (the `make_desk_dataset.py` demo there) and emits checkpoints, metric
 * logs, and speed-map containers the assessment tooling reads directly.
 */

import * as fs from "node:fs";

import * as tf from "@tensorflow/tfjs";

import { initBackend } from "./backend.js";
import { readWaveform, writeRaster } from "./containers.js";
import { denormalizeImage, loadDeskDataset, splitIndices } from "./data.js";
import {
  DEFAULT_OBSERVER_TRAIN,
  buildObserver,
  loadObserver,
  saveObserver,
  trainObserver,
} from "./observer.js";
import {
  DEFAULT_TRAIN_CONFIG,
  TrainConfig,
  formatMetricLog,
  loadRecon,
  reconPredict,
  saveRecon,
  trainReconstructor,
} from "./recon.js";

function parseArgs(argv: string[]): Map<string, string> {
  const out = new Map<string, string>();
  for (let i = 0; i < argv.length; i++) {
    if (!argv[i].startsWith("--")) throw new Error(`unexpected argument ${argv[i]}`);
    const key = argv[i].slice(2);
    if (i + 1 >= argv.length) throw new Error(`missing value for --${key}`);
    out.set(key, argv[++i]);
  }
  return out;
}

function need(args: Map<string, string>, key: string): string {
  const v = args.get(key);
  if (v === undefined) throw new Error(`missing required --${key}`);
  return v;
}

function numOr(args: Map<string, string>, key: string, fallback: number): number {
  const v = args.get(key);
  return v === undefined ? fallback : Number(v);
}

function parseGammas(text: string): number[] {
  return text.split(",").map((s) => {
    const t = s.trim().toLowerCase();
    return t === "inf" || t === "infinity" ? Infinity : Number(t);
  });
}

async function cmdTrainObserver(args: Map<string, string>): Promise<number> {
  const dataset = loadDeskDataset(need(args, "data"));
  const holdout = numOr(args, "holdout", 50);
  const { train } = splitIndices(dataset.observer.length, holdout);
  const model = buildObserver({
    inputSize: dataset.config.nx,
    baseFilters: numOr(args, "base-filters", 8),
    seed: numOr(args, "seed", DEFAULT_OBSERVER_TRAIN.seed),
  });
  const losses = await trainObserver(
    model,
    train.map((i) => dataset.observer[i]),
    {
      epochs: numOr(args, "epochs", DEFAULT_OBSERVER_TRAIN.epochs),
      batchSize: numOr(args, "batch", DEFAULT_OBSERVER_TRAIN.batchSize),
      learningRate: numOr(args, "lr", DEFAULT_OBSERVER_TRAIN.learningRate),
      seed: numOr(args, "seed", DEFAULT_OBSERVER_TRAIN.seed),
      posWeight: numOr(args, "pos-weight", DEFAULT_OBSERVER_TRAIN.posWeight),
      onEpoch: (epoch, loss) => console.error(`epoch ${epoch}: bce ${loss.toExponential(4)}`),
    }
  );
  const stem = need(args, "out");
  saveObserver(model, stem);
  console.log(stem + ".json");
  console.log(`final training bce: ${losses[losses.length - 1].toExponential(4)}`);
  return 0;
}

async function cmdTrainRecon(args: Map<string, string>): Promise<number> {
  const dataset = loadDeskDataset(need(args, "data"));
  const observer = loadObserver(need(args, "observer"));
  const config: TrainConfig = {
    ...DEFAULT_TRAIN_CONFIG,
    encoderMode: (args.get("mode") as TrainConfig["encoderMode"]) ?? "random-fixed",
    lChannels: numOr(args, "channels", DEFAULT_TRAIN_CONFIG.lChannels),
    gammaSchedule: args.has("gammas")
      ? parseGammas(need(args, "gammas"))
      : DEFAULT_TRAIN_CONFIG.gammaSchedule,
    epochsPerStage: numOr(args, "epochs-per-stage", DEFAULT_TRAIN_CONFIG.epochsPerStage),
    batchSize: numOr(args, "batch", DEFAULT_TRAIN_CONFIG.batchSize),
    onlineNoiseSnrDb: args.get("noise-snr") === "none" ? null : numOr(args, "noise-snr", 30),
    learningRate: numOr(args, "lr", DEFAULT_TRAIN_CONFIG.learningRate),
    valCount: numOr(args, "val-count", DEFAULT_TRAIN_CONFIG.valCount),
    seed: numOr(args, "seed", DEFAULT_TRAIN_CONFIG.seed),
    trainEncoder: args.get("freeze-encoder") !== "true",
    learnedInit: (args.get("learned-init") as TrainConfig["learnedInit"]) ?? "gaussian",
  };
  const stem = need(args, "out");
  const result = await trainReconstructor(dataset, observer, config, {
    checkpointStem: stem,
    onEpoch: (rec) =>
      console.error(
        `stage ${rec.stage} (gamma=${rec.gamma}) epoch ${rec.epoch}: ` +
          `train ${rec.trainLoss.toExponential(4)} val ${rec.valCombined.toExponential(4)}`
      ),
  });
  saveRecon(result.model, stem);
  console.log(stem + ".json");
  const logPath = args.get("log");
  if (logPath) {
    fs.writeFileSync(logPath, formatMetricLog(result.stages));
    console.log(logPath);
  }
  return 0;
}

async function cmdInfer(args: Map<string, string>): Promise<number> {
  const model = loadRecon(need(args, "model"));
  const wf = readWaveform(need(args, "data"));
  const [I, K, J] = wf.shape;
  const raw = tf.tensor4d(wf.data, [1, I, K, J]);
  const pred = reconPredict(model, raw);
  const values = denormalizeImage(pred.dataSync() as Float32Array);
  const out = need(args, "out");
  writeRaster(out, [model.outputSize, model.outputSize], values);
  console.log(out);
  raw.dispose();
  pred.dispose();
  return 0;
}

export async function main(argv: string[]): Promise<number> {
  const [command, ...rest] = argv;
  if (!command || command === "--help" || command === "-h") {
    console.error(
      "usage: cli <train-observer|train-recon|infer> [--key value ...]\n" +
        "  train-observer --data <deskdir> --out <stem> [--epochs N --batch N --lr X --seed N --holdout N]\n" +
        "  train-recon    --data <deskdir> --observer <stem> --out <stem>\n" +
        "                 [--mode reference|subsample|random-fixed|learned --channels L\n" +
        "                  --gammas 0,1e-3,...,inf --epochs-per-stage N --batch N --lr X\n" +
        "                  --noise-snr dB|none --seed N --log <file>]\n" +
        "  infer          --model <stem> --data <file.uswf> --out <file.sos>"
    );
    return command ? 0 : 2;
  }
  await initBackend();
  const args = parseArgs(rest);
  switch (command) {
    case "train-observer":
      return cmdTrainObserver(args);
    case "train-recon":
      return cmdTrainRecon(args);
    case "infer":
      return cmdInfer(args);
    default:
      console.error(`unknown command ${command}`);
      return 2;
  }
}

const isMain = process.argv[1] && import.meta.url.endsWith(process.argv[1].split("/").pop()!);
if (isMain) {
  main(process.argv.slice(2))
    .then((code) => process.exit(code))
    .catch((err) => {
      console.error(`error: ${err.message}`);
      process.exit(1);
    });
}
