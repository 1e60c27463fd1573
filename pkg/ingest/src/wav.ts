import * as fs from "fs";
import { AudioDecodeError } from "./types.js";

export interface Waveform {
  samples: Float32Array; // mono, [-1, 1]
  sampleRate: number;
}

/** Minimal RIFF/WAVE reader: PCM16 or float32, any channel count (downmixed). */
export function readWav(path: string): Waveform {
  let buf: Buffer;
  try {
    buf = fs.readFileSync(path);
  } catch (err) {
    throw new AudioDecodeError(`cannot read audio file ${path}: ${(err as Error).message}`);
  }
  if (buf.length < 44 || buf.toString("ascii", 0, 4) !== "RIFF" || buf.toString("ascii", 8, 12) !== "WAVE") {
    throw new AudioDecodeError(`${path} is not a RIFF/WAVE file`);
  }
  let offset = 12;
  let format = 0;
  let channels = 0;
  let sampleRate = 0;
  let bitsPerSample = 0;
  let data: Buffer | null = null;
  while (offset + 8 <= buf.length) {
    const chunkId = buf.toString("ascii", offset, offset + 4);
    const chunkSize = buf.readUInt32LE(offset + 4);
    const body = offset + 8;
    if (chunkId === "fmt ") {
      format = buf.readUInt16LE(body);
      channels = buf.readUInt16LE(body + 2);
      sampleRate = buf.readUInt32LE(body + 4);
      bitsPerSample = buf.readUInt16LE(body + 14);
    } else if (chunkId === "data") {
      data = buf.subarray(body, body + chunkSize);
    }
    offset = body + chunkSize + (chunkSize % 2);
  }
  if (!data || !sampleRate || !channels) {
    throw new AudioDecodeError(`${path}: missing fmt or data chunk`);
  }
  let interleaved: Float32Array;
  if (format === 1 && bitsPerSample === 16) {
    const n = Math.floor(data.length / 2);
    interleaved = new Float32Array(n);
    for (let i = 0; i < n; i++) {
      interleaved[i] = data.readInt16LE(i * 2) / 32768;
    }
  } else if (format === 3 && bitsPerSample === 32) {
    const n = Math.floor(data.length / 4);
    interleaved = new Float32Array(n);
    for (let i = 0; i < n; i++) {
      interleaved[i] = data.readFloatLE(i * 4);
    }
  } else {
    throw new AudioDecodeError(`${path}: unsupported encoding (format=${format}, bits=${bitsPerSample})`);
  }
  if (channels === 1) {
    return { samples: interleaved, sampleRate };
  }
  const frames = Math.floor(interleaved.length / channels);
  const mono = new Float32Array(frames);
  for (let i = 0; i < frames; i++) {
    let acc = 0;
    for (let c = 0; c < channels; c++) acc += interleaved[i * channels + c];
    mono[i] = acc / channels;
  }
  return { samples: mono, sampleRate };
}

/** PCM16 mono writer, used by the test-data generator. */
export function writeWav(path: string, samples: Float32Array, sampleRate: number): void {
  const dataSize = samples.length * 2;
  const buf = Buffer.alloc(44 + dataSize);
  buf.write("RIFF", 0, "ascii");
  buf.writeUInt32LE(36 + dataSize, 4);
  buf.write("WAVE", 8, "ascii");
  buf.write("fmt ", 12, "ascii");
  buf.writeUInt32LE(16, 16);
  buf.writeUInt16LE(1, 20); // PCM
  buf.writeUInt16LE(1, 22); // mono
  buf.writeUInt32LE(sampleRate, 24);
  buf.writeUInt32LE(sampleRate * 2, 28);
  buf.writeUInt16LE(2, 32);
  buf.writeUInt16LE(16, 34);
  buf.write("data", 36, "ascii");
  buf.writeUInt32LE(dataSize, 40);
  for (let i = 0; i < samples.length; i++) {
    const clamped = Math.max(-1, Math.min(1, samples[i]));
    buf.writeInt16LE(Math.round(clamped * 32767), 44 + i * 2);
  }
  fs.writeFileSync(path, buf);
}
