/**
 * Desk dataset access: labeled phantoms for the observer, raw waveform
 * tensors plus truth maps for the reconstructor, encoder modes, and
 * seeded online noise augmentation.
 *
 * Everything is consumed through the container files and the manifest
 * written by the simulation side; nothing here re-implements physics.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import {
  AcquisitionInfo,
  FormatError,
  readAcquisitionConfig,
  readEncoder,
  readManifest,
  readMask,
  readRaster,
  readWaveform,
  verifyManifest,
} from "./containers.js";
import { Rng } from "./rng.js";

/** Normalization: speed maps enter the nets as (c - SPEED_REF)/SPEED_SCALE. */
export const SPEED_REF = 1500.0;
export const SPEED_SCALE = 100.0;

export type EncoderMode = "reference" | "subsample" | "random-fixed" | "learned";
export const ENCODER_MODES: EncoderMode[] = ["reference", "subsample", "random-fixed", "learned"];

export interface ObserverSample {
  /** normalized speed map, row-major nx*nx */
  image: Float32Array;
  /** binary tumor mask, nx*nx */
  mask: Uint8Array;
  name: string;
}

export interface ReconSample {
  /** raw waveform tensor, (sources, steps, receivers) row-major */
  waveform: Float32Array;
  /** normalized truth map, nx*nx */
  image: Float32Array;
  mask: Uint8Array;
  name: string;
}

export interface DeskDataset {
  root: string;
  config: AcquisitionInfo;
  /** fixed random encoding matrix from the manifest, shape [L, I] */
  encoderWeights: Float32Array;
  encoderShape: number[];
  observer: ObserverSample[];
  recon: ReconSample[];
}

export function normalizeImage(values: Float32Array): Float32Array {
  const out = new Float32Array(values.length);
  for (let i = 0; i < values.length; i++) out[i] = (values[i] - SPEED_REF) / SPEED_SCALE;
  return out;
}

export function denormalizeImage(values: Float32Array): Float32Array {
  const out = new Float32Array(values.length);
  for (let i = 0; i < values.length; i++) out[i] = values[i] * SPEED_SCALE + SPEED_REF;
  return out;
}

function listIndexed(dir: string, prefix: string, suffix: string): string[] {
  return fs
    .readdirSync(dir)
    .filter((f) => f.startsWith(prefix) && f.endsWith(suffix))
    .sort();
}

export function loadDeskDataset(root: string, verify = false): DeskDataset {
  const manifest = readManifest(path.join(root, "desk.manifest"));
  if (verify) verifyManifest(manifest, root);
  const config = readAcquisitionConfig(path.join(root, "desk.cfg"));
  const enc = readEncoder(path.join(root, "desk.encw"));

  const observer: ObserverSample[] = [];
  const obsDir = path.join(root, "obs");
  for (const sos of listIndexed(obsDir, "p", ".sos")) {
    const stem = sos.slice(0, -4);
    const raster = readRaster(path.join(obsDir, sos));
    const mask = readMask(path.join(obsDir, stem + ".mask.msk"));
    observer.push({ image: normalizeImage(raster.data), mask: mask.data, name: stem });
  }

  const recon: ReconSample[] = [];
  const reconDir = path.join(root, "recon");
  for (const sos of listIndexed(reconDir, "p", ".sos")) {
    const stem = sos.slice(0, -4);
    const raster = readRaster(path.join(reconDir, sos));
    const mask = readMask(path.join(reconDir, stem + ".mask.msk"));
    const wf = readWaveform(path.join(reconDir, "d" + stem.slice(1) + ".uswf"));
    const [nSrc, nSteps, nRecv] = wf.shape;
    if (nSrc !== config.nTransmitters || nSteps !== config.nSteps || nRecv !== config.nReceivers) {
      throw new FormatError(
        `${stem}: waveform shape ${wf.shape} does not match the acquisition config`
      );
    }
    recon.push({ waveform: wf.data, image: normalizeImage(raster.data), mask: mask.data, name: stem });
  }
  return {
    root,
    config,
    encoderWeights: enc.data,
    encoderShape: enc.shape,
    observer,
    recon,
  };
}

/**
 * The fixed encoding matrix for a mode, shape [L, I] row-major, or null for
 * the reference (no encoding) and learned (trainable W) modes.
 */
export function modeEncoder(
  dataset: DeskDataset,
  mode: EncoderMode,
  lChannels: number
): Float32Array | null {
  const I = dataset.config.nTransmitters;
  if (mode === "reference" || mode === "learned") return null;
  if (mode === "random-fixed") {
    const [L, cols] = dataset.encoderShape;
    if (L !== lChannels || cols !== I) {
      throw new FormatError(
        `dataset encoder is ${L}x${cols}, requested L=${lChannels} over I=${I}`
      );
    }
    return dataset.encoderWeights;
  }
  // subsample: one-hot rows keeping every (I/L)-th source
  if (I % lChannels !== 0) {
    throw new FormatError(`subsample needs I divisible by L, got I=${I}, L=${lChannels}`);
  }
  const W = new Float32Array(lChannels * I);
  for (let l = 0; l < lChannels; l++) W[l * I + l * (I / lChannels)] = 1.0;
  return W;
}

/**
 * White Gaussian noise at a fixed SNR, composed on the raw per-source
 * channels (so encoding mixes signal and noise together, never fresh noise
 * after encoding). Returns a new array; the input is untouched.
 */
export function addOnlineNoise(waveform: Float32Array, snrDb: number, rng: Rng): Float32Array {
  let sumSq = 0;
  for (let i = 0; i < waveform.length; i++) sumSq += waveform[i] * waveform[i];
  const rms = Math.sqrt(sumSq / waveform.length);
  if (rms === 0) throw new FormatError("cannot scale noise to an all-zero waveform");
  const sigma = rms / Math.pow(10, snrDb / 20);
  const out = new Float32Array(waveform.length);
  for (let i = 0; i < waveform.length; i++) out[i] = waveform[i] + sigma * rng.gaussian();
  return out;
}

/** Deterministic train/validation/held-out index splits. */
export function splitIndices(n: number, holdOut: number): { train: number[]; held: number[] } {
  const train: number[] = [];
  const held: number[] = [];
  for (let i = 0; i < n; i++) (i < n - holdOut ? train : held).push(i);
  return { train, held };
}
