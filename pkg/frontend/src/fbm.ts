/**
 * .fbm writer, byte-for-byte per docs/format.md: little-endian header,
 * per-layer records in network order, trailing CRC32 (IEEE polynomial)
 * over all preceding bytes.
 */

import { EngineModel } from "./convert.js";

const KIND_CODES = { input_conv: 1, conv_unit: 2, global_pool: 3, classifier: 4 } as const;

let CRC_TABLE: Uint32Array | null = null;

function crcTable(): Uint32Array {
  if (CRC_TABLE === null) {
    CRC_TABLE = new Uint32Array(256);
    for (let n = 0; n < 256; n++) {
      let c = n;
      for (let k = 0; k < 8; k++) {
        c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
      }
      CRC_TABLE[n] = c >>> 0;
    }
  }
  return CRC_TABLE;
}

export function crc32(data: Uint8Array): number {
  const table = crcTable();
  let crc = 0xffffffff;
  for (let i = 0; i < data.length; i++) {
    crc = table[(crc ^ data[i]) & 0xff] ^ (crc >>> 8);
  }
  return (crc ^ 0xffffffff) >>> 0;
}

class Writer {
  private chunks: Buffer[] = [];

  u8(v: number): void {
    this.chunks.push(Buffer.from([v]));
  }

  u16(v: number): void {
    const b = Buffer.alloc(2);
    b.writeUInt16LE(v, 0);
    this.chunks.push(b);
  }

  u32(v: number): void {
    const b = Buffer.alloc(4);
    b.writeUInt32LE(v >>> 0, 0);
    this.chunks.push(b);
  }

  raw(b: Buffer): void {
    this.chunks.push(b);
  }

  words(words: BigUint64Array): void {
    const b = Buffer.alloc(words.length * 8);
    for (let i = 0; i < words.length; i++) {
      b.writeBigUInt64LE(words[i], i * 8);
    }
    this.chunks.push(b);
  }

  i32s(arr: Int32Array): void {
    const b = Buffer.alloc(arr.length * 4);
    for (let i = 0; i < arr.length; i++) {
      b.writeInt32LE(arr[i], i * 4);
    }
    this.chunks.push(b);
  }

  i8s(arr: Int8Array): void {
    this.chunks.push(Buffer.from(Int8Array.from(arr).buffer));
  }

  concat(): Buffer {
    return Buffer.concat(this.chunks);
  }
}

export function encodeModel(model: EngineModel): Buffer {
  const { topology, layers } = model;
  const w = new Writer();
  w.raw(Buffer.from("FBNN", "ascii"));
  w.u16(1); // format version
  w.u16(topology.tag);
  w.u8(topology.resolution);
  w.u16(topology.classes);
  w.u16(topology.blocks.length);
  w.u8(0); // reserved

  topology.blocks.forEach((block, i) => {
    const params = layers[i];
    w.u8(KIND_CODES[block.kind]);
    if (params.kind === "input_conv") {
      w.u16(block.inChannels);
      w.u16(block.outChannels);
      w.u8(block.kernel);
      w.u8(block.stride);
      w.u8(block.pad);
      w.words(params.words);
      w.i32s(params.bnScale);
      w.i32s(params.bnBias);
    } else if (params.kind === "conv_unit") {
      w.u16(block.inChannels);
      w.u16(block.outChannels);
      w.u8(block.kernel);
      w.u8(block.stride);
      w.u8(block.pad);
      w.u8((block.hasShortcut ? 1 : 0) | (block.downsample ? 2 : 0));
      w.words(params.words);
      w.i32s(params.actScale);
      w.i32s(params.delta);
      w.i32s(params.alpha);
      w.i32s(params.beta);
      w.i32s(params.gamma);
      w.i32s(params.bnScale);
      w.i32s(params.bnBias);
    } else if (params.kind === "classifier") {
      w.u16(block.inChannels);
      w.u16(topology.classes);
      w.i8s(params.weight);
      w.i32s(params.bias);
    }
  });
  const payload = w.concat();
  const trailer = Buffer.alloc(4);
  trailer.writeUInt32LE(crc32(payload), 0);
  return Buffer.concat([payload, trailer]);
}
