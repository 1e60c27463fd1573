import * as fs from "fs";
import * as path from "path";
import { loadModels } from "./models.js";
import { readWav } from "./wav.js";
import { IngestConfig, SegmentLine } from "./types.js";

export interface IngestResult {
  segmentsPath: string;
  enrollmentPath: string | null;
  segmentCount: number;
}

/**
 * Full ingest pass: enhance -> VAD -> per-interval ASR + embedding,
 * written as segment JSONL, plus the enrollment embedding as a
 * one-line JSON vector when enrollment audio is configured.
 *
 * Roles stay null throughout: clustering and role assignment belong to
 * the engine, which keeps all of that testable without audio.
 */
export function ingest(audioPath: string, config: IngestConfig, outDir: string): IngestResult {
  const models = loadModels(config); // must fail before any audio read
  fs.mkdirSync(outDir, { recursive: true });

  const wave = models.enhance(readWav(audioPath));
  const intervals = models.vad(wave);
  // embedding components stay full precision: rounding would break the
  // unit-norm contract the engine checks at 1e-6
  const lines: SegmentLine[] = intervals.map((interval, index) => ({
    utterance: models.asr(wave, interval, index),
    role: null,
    t_start: round6(interval.start),
    t_end: round6(interval.end),
    embedding: models.embed(wave, interval),
    emotion: null,
  }));

  const segmentsPath = path.join(outDir, "segments.jsonl");
  fs.writeFileSync(segmentsPath, lines.map((l) => JSON.stringify(l) + "\n").join(""), "utf-8");

  let enrollmentPath: string | null = null;
  if (config.enrollmentAudio) {
    const enrollWave = models.enhance(readWav(config.enrollmentAudio));
    const vector = models.embed(enrollWave, {
      start: 0,
      end: enrollWave.samples.length / enrollWave.sampleRate,
    });
    enrollmentPath = path.join(outDir, "enrollment.json");
    fs.writeFileSync(enrollmentPath, JSON.stringify(vector) + "\n", "utf-8");
  }
  return { segmentsPath, enrollmentPath, segmentCount: lines.length };
}

function round6(x: number): number {
  return Math.round(x * 1e6) / 1e6;
}
