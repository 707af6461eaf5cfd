/**
 * Byte-compatible readers and writers for the usct container files.
 *
 * Layout (little-endian): 8-byte ASCII magic, uint32 version (=1), uint32
 * dimension count, uint32 dimensions, row-major payload (float32, or uint8
 * for USCTMASK), trailing uint64 FNV-1a checksum of the payload bytes.
 * Configs and dataset manifests are plain-text `key = value` files.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { fnv1a64, fnv1a64Hex } from "./fnv.js";

export const MAGIC_SOSMAP = "USCTSOSM";
export const MAGIC_MASK = "USCTMASK";
export const MAGIC_WAVE = "USCTWAVE";
export const MAGIC_ENCODER = "USCTENCW";
const FORMAT_VERSION = 1;

export class FormatError extends Error {}
export class ChecksumMismatch extends FormatError {}
export class UnsupportedVersion extends FormatError {}

export interface Container {
  magic: string;
  shape: number[];
  /** float32 values, or 0/255 byte values widened to numbers for masks */
  data: Float32Array | Uint8Array;
}

function readContainer(filePath: string, expectMagic: string): Container {
  const blob = fs.readFileSync(filePath);
  const buf = blob.buffer.slice(blob.byteOffset, blob.byteOffset + blob.byteLength);
  const view = new DataView(buf);
  if (blob.length < 16) {
    throw new FormatError(`${filePath}: truncated header at byte ${blob.length}`);
  }
  const magic = blob.subarray(0, 8).toString("ascii");
  if (magic !== expectMagic) {
    throw new FormatError(`${filePath}: bad magic ${magic} at byte 0, expected ${expectMagic}`);
  }
  const version = view.getUint32(8, true);
  if (version !== FORMAT_VERSION) {
    throw new UnsupportedVersion(`${filePath}: unsupported version ${version} at byte 8`);
  }
  const ndim = view.getUint32(12, true);
  if (ndim < 1 || ndim > 8) {
    throw new FormatError(`${filePath}: implausible dimension count ${ndim} at byte 12`);
  }
  const dimsEnd = 16 + 4 * ndim;
  if (blob.length < dimsEnd) {
    throw new FormatError(`${filePath}: truncated dimension list at byte ${blob.length}`);
  }
  const shape: number[] = [];
  for (let d = 0; d < ndim; d++) shape.push(view.getUint32(16 + 4 * d, true));
  const itemSize = expectMagic === MAGIC_MASK ? 1 : 4;
  const count = shape.reduce((a, b) => a * b, 1);
  const payloadEnd = dimsEnd + count * itemSize;
  if (blob.length < payloadEnd + 8) {
    throw new FormatError(
      `${filePath}: truncated payload/checksum at byte ${blob.length} (need ${payloadEnd + 8})`
    );
  }
  const payload = new Uint8Array(buf, dimsEnd, count * itemSize);
  const stored = view.getBigUint64(payloadEnd, true);
  const actual = fnv1a64(payload);
  if (stored !== actual) {
    throw new ChecksumMismatch(
      `${filePath}: checksum ${actual.toString(16)} != stored ${stored.toString(16)}`
    );
  }
  const data =
    expectMagic === MAGIC_MASK
      ? new Uint8Array(payload) // copy
      : new Float32Array(buf.slice(dimsEnd, payloadEnd));
  return { magic, shape, data };
}

function writeContainer(filePath: string, magic: string, shape: number[], data: Float32Array | Uint8Array): void {
  const itemSize = magic === MAGIC_MASK ? 1 : 4;
  const count = shape.reduce((a, b) => a * b, 1);
  if (data.length !== count) {
    throw new FormatError(`payload length ${data.length} does not match shape ${shape}`);
  }
  const head = Buffer.alloc(16 + 4 * shape.length);
  head.write(magic, 0, "ascii");
  head.writeUInt32LE(FORMAT_VERSION, 8);
  head.writeUInt32LE(shape.length, 12);
  shape.forEach((s, d) => head.writeUInt32LE(s, 16 + 4 * d));
  const payload = Buffer.from(data.buffer, data.byteOffset, count * itemSize);
  const tail = Buffer.alloc(8);
  tail.writeBigUInt64LE(fnv1a64(new Uint8Array(payload)), 0);
  const tmp = filePath + ".tmp-" + process.pid;
  fs.writeFileSync(tmp, Buffer.concat([head, payload, tail]));
  fs.renameSync(tmp, filePath);
}

export function readRaster(filePath: string): { shape: number[]; data: Float32Array } {
  const c = readContainer(filePath, MAGIC_SOSMAP);
  return { shape: c.shape, data: c.data as Float32Array };
}

export function writeRaster(filePath: string, shape: number[], data: Float32Array): void {
  writeContainer(filePath, MAGIC_SOSMAP, shape, data);
}

export function readMask(filePath: string): { shape: number[]; data: Uint8Array } {
  const c = readContainer(filePath, MAGIC_MASK);
  return { shape: c.shape, data: c.data as Uint8Array };
}

export function writeMask(filePath: string, shape: number[], data: Uint8Array): void {
  writeContainer(filePath, MAGIC_MASK, shape, data);
}

export function readWaveform(filePath: string): { shape: number[]; data: Float32Array } {
  const c = readContainer(filePath, MAGIC_WAVE);
  if (c.shape.length !== 3) {
    throw new FormatError(`${filePath}: waveform tensor must be 3-D, got ${c.shape}`);
  }
  return { shape: c.shape, data: c.data as Float32Array };
}

export function writeWaveform(filePath: string, shape: number[], data: Float32Array): void {
  writeContainer(filePath, MAGIC_WAVE, shape, data);
}

export function readEncoder(filePath: string): { shape: number[]; data: Float32Array } {
  const c = readContainer(filePath, MAGIC_ENCODER);
  if (c.shape.length !== 2) {
    throw new FormatError(`${filePath}: encoder must be 2-D, got ${c.shape}`);
  }
  return { shape: c.shape, data: c.data as Float32Array };
}

// ---------------------------------------------------------------------------
// plain-text key = value files
// ---------------------------------------------------------------------------

export function parseKeyValues(text: string, source = "<config>"): Map<string, string> {
  const out = new Map<string, string>();
  const files: string[] = [];
  text.split(/\r?\n/).forEach((line, idx) => {
    const stripped = line.split("#", 1)[0].trim();
    if (!stripped) return;
    const eq = stripped.indexOf("=");
    if (eq < 0) throw new FormatError(`${source}:${idx + 1}: expected 'key = value'`);
    const key = stripped.slice(0, eq).trim();
    const value = stripped.slice(eq + 1).trim();
    if (key === "file") {
      files.push(value);
    } else if (out.has(key)) {
      throw new FormatError(`${source}:${idx + 1}: duplicate key ${key}`);
    } else {
      out.set(key, value);
    }
  });
  if (files.length) out.set("__files__", files.join("\n"));
  return out;
}

export interface AcquisitionInfo {
  nx: number;
  dx: number;
  pad: number;
  nReceivers: number;
  nTransmitters: number;
  nSteps: number;
  dt: number;
}

export function readAcquisitionConfig(filePath: string): AcquisitionInfo {
  const kv = parseKeyValues(fs.readFileSync(filePath, "utf-8"), filePath);
  const need = (k: string): string => {
    const v = kv.get(k);
    if (v === undefined) throw new FormatError(`${filePath}: missing config key ${k}`);
    return v;
  };
  const nReceivers = Number(need("n_receivers"));
  const tx = need("transmitters");
  const nTransmitters = tx === "every4" ? nReceivers / 4 : tx.split(",").length;
  return {
    nx: Number(need("nx")),
    dx: Number(need("dx")),
    pad: Number(need("pad")),
    nReceivers,
    nTransmitters,
    nSteps: Number(need("n_steps")),
    dt: Number(need("dt")),
  };
}

export interface Manifest {
  configHash: string;
  encoder: string;
  noiseSnrDb: number | null;
  noiseSeed: number | null;
  files: Array<{ path: string; checksum: string }>;
}

export function readManifest(filePath: string): Manifest {
  const kv = parseKeyValues(fs.readFileSync(filePath, "utf-8"), filePath);
  if (kv.get("version") !== "1") {
    throw new UnsupportedVersion(`${filePath}: unsupported manifest version ${kv.get("version")}`);
  }
  const files = (kv.get("__files__") ?? "")
    .split("\n")
    .filter((s) => s.length > 0)
    .map((entry) => {
      const cut = entry.lastIndexOf(" ");
      if (cut < 0) throw new FormatError(`${filePath}: malformed file entry '${entry}'`);
      return { path: entry.slice(0, cut), checksum: entry.slice(cut + 1) };
    });
  const snr = kv.get("noise_snr_db") ?? "none";
  const seed = kv.get("noise_seed") ?? "none";
  return {
    configHash: kv.get("config_hash") ?? "",
    encoder: kv.get("encoder") ?? "none",
    noiseSnrDb: snr === "none" ? null : Number(snr),
    noiseSeed: seed === "none" ? null : Number(seed),
    files,
  };
}

export function verifyManifest(manifest: Manifest, root: string): void {
  for (const { path: rel, checksum } of manifest.files) {
    const full = path.join(root, rel);
    if (!fs.existsSync(full)) throw new FormatError(`manifest references missing file ${rel}`);
    const actual = fnv1a64Hex(new Uint8Array(fs.readFileSync(full)));
    if (actual !== checksum) {
      throw new ChecksumMismatch(`${rel}: checksum ${actual} != manifest ${checksum}`);
    }
  }
}
