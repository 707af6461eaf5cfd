/**
 * 64-bit FNV-1a over bytes, computed with 16-bit limbs so no BigInt math
 * runs in the hot loop. Matches the checksums in the usct container files.
 */

const PRIME_LOW = 0x1b3; // FNV64 prime is 2^40 + 0x1b3

export function fnv1a64(data: Uint8Array): bigint {
  // hash limbs, least significant first: 0xcbf29ce484222325
  let v0 = 0x2325;
  let v1 = 0x8422;
  let v2 = 0x9ce4;
  let v3 = 0xcbf2;
  for (let i = 0; i < data.length; i++) {
    v0 ^= data[i];
    // multiply by the prime: t = v*0x1b3 + (v << 40)
    let t0 = v0 * PRIME_LOW;
    let t1 = v1 * PRIME_LOW;
    let t2 = v2 * PRIME_LOW;
    let t3 = v3 * PRIME_LOW;
    t2 += v0 << 8; // v << 40 contributes limb k to limb k+2, shifted by 8
    t3 += v1 << 8;
    t1 += t0 >>> 16;
    v0 = t0 & 0xffff;
    t2 += t1 >>> 16;
    v1 = t1 & 0xffff;
    t3 += t2 >>> 16;
    v2 = t2 & 0xffff;
    v3 = t3 & 0xffff;
  }
  return (
    (BigInt(v3) << 48n) | (BigInt(v2) << 32n) | (BigInt(v1) << 16n) | BigInt(v0)
  );
}

export function fnv1a64Hex(data: Uint8Array): string {
  return fnv1a64(data).toString(16).padStart(16, "0");
}
