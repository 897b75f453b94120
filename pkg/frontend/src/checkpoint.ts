/**
 * Framework checkpoint container (.fckpt).
 *
 * Layout: u32 LE header length, JSON header, then raw little-endian
 * float32 tensor data. The header maps tensor names to
 * { shape: number[], offset: number } with offsets relative to the start
 * of the data section.
 */

import { readFileSync, writeFileSync } from "node:fs";
import { Tensor, numel, tensor } from "./tensors.js";

export type Checkpoint = Map<string, Tensor>;

interface HeaderEntry {
  shape: number[];
  offset: number;
}

export function encodeCheckpoint(ckpt: Checkpoint): Buffer {
  const header: Record<string, HeaderEntry> = {};
  let offset = 0;
  const chunks: Buffer[] = [];
  for (const [name, t] of ckpt) {
    header[name] = { shape: [...t.shape], offset };
    const f32 = new Float32Array(t.data);
    const buf = Buffer.from(f32.buffer, f32.byteOffset, f32.byteLength);
    chunks.push(buf);
    offset += buf.length;
  }
  const headerBuf = Buffer.from(JSON.stringify(header), "utf-8");
  const lenBuf = Buffer.alloc(4);
  lenBuf.writeUInt32LE(headerBuf.length, 0);
  return Buffer.concat([lenBuf, headerBuf, ...chunks]);
}

export function decodeCheckpoint(data: Buffer): Checkpoint {
  if (data.length < 4) {
    throw new Error("checkpoint shorter than its header length field");
  }
  const headerLen = data.readUInt32LE(0);
  if (4 + headerLen > data.length) {
    throw new Error("checkpoint header extends past end of file");
  }
  const header = JSON.parse(data.subarray(4, 4 + headerLen).toString("utf-8")) as
    Record<string, HeaderEntry>;
  const base = 4 + headerLen;
  const ckpt: Checkpoint = new Map();
  for (const [name, entry] of Object.entries(header)) {
    const n = numel(entry.shape);
    const start = base + entry.offset;
    const end = start + 4 * n;
    if (end > data.length) {
      throw new Error(`tensor ${name} extends past end of checkpoint`);
    }
    const f32 = new Float32Array(n);
    for (let i = 0; i < n; i++) {
      f32[i] = data.readFloatLE(start + 4 * i);
    }
    ckpt.set(name, tensor(entry.shape, Float64Array.from(f32)));
  }
  return ckpt;
}

export function writeCheckpointFile(path: string, ckpt: Checkpoint): void {
  writeFileSync(path, encodeCheckpoint(ckpt));
}

export function readCheckpointFile(path: string): Checkpoint {
  return decodeCheckpoint(readFileSync(path));
}

export function getTensor(ckpt: Checkpoint, name: string): Tensor {
  const t = ckpt.get(name);
  if (t === undefined) {
    throw new Error(`checkpoint is missing tensor ${name}`);
  }
  return t;
}
