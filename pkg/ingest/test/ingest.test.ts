import { execFileSync } from "child_process";
import * as fs from "fs";
import * as os from "os";
import * as path from "path";
import { fileURLToPath } from "url";
import { beforeAll, describe, expect, it } from "vitest";
import { ingest } from "../src/ingest.js";
import { loadModels } from "../src/models.js";
import { segmentLineSchema, validateJsonl } from "../src/schema.js";
import { AudioDecodeError, IngestConfig, ModelLoadError } from "../src/types.js";
import { readWav, writeWav } from "../src/wav.js";

const here = path.dirname(fileURLToPath(import.meta.url));
const testdata = path.join(here, "..", "testdata");
const CLIP = path.join(testdata, "clip.wav");
const SILENCE = path.join(testdata, "silence.wav");
const ENROLLMENT = path.join(testdata, "enrollment.wav");

const CONFIG: IngestConfig = {
  enhancement: "builtin:dc-remove",
  vad: "builtin:energy",
  asr: "builtin:marker",
  embedding: "builtin:spectral-hash",
};

function tmpdir(): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), "ingest-test-"));
}

beforeAll(() => {
  if (!fs.existsSync(CLIP)) {
    execFileSync("node", [path.join(here, "..", "scripts", "make_testdata.mjs")]);
  }
});

describe("wav io", () => {
  it("round-trips PCM16", () => {
    const dir = tmpdir();
    const samples = new Float32Array([0, 0.5, -0.5, 0.25]);
    const file = path.join(dir, "x.wav");
    writeWav(file, samples, 16000);
    const wave = readWav(file);
    expect(wave.sampleRate).toBe(16000);
    expect(wave.samples.length).toBe(4);
    expect(wave.samples[1]).toBeCloseTo(0.5, 3);
  });

  it("rejects non-wav bytes", () => {
    const dir = tmpdir();
    const file = path.join(dir, "junk.bin");
    fs.writeFileSync(file, Buffer.from("definitely not audio content at all"));
    expect(() => readWav(file)).toThrow(AudioDecodeError);
  });
});

describe("model registry", () => {
  it("loads builtin stand-ins", () => {
    const models = loadModels(CONFIG);
    expect(typeof models.vad).toBe("function");
  });

  it("rejects unknown builtin", () => {
    expect(() => loadModels({ ...CONFIG, vad: "builtin:neural-vad-v9" })).toThrow(ModelLoadError);
  });

  it("rejects unregistered external identifiers", () => {
    expect(() => loadModels({ ...CONFIG, asr: "/models/asr.onnx" })).toThrow(ModelLoadError);
  });
});

describe("ingest", () => {
  it("produces schema-valid segments from the bundled clip", () => {
    const out = tmpdir();
    const result = ingest(CLIP, { ...CONFIG, enrollmentAudio: ENROLLMENT }, out);
    expect(result.segmentCount).toBeGreaterThanOrEqual(1);
    const content = fs.readFileSync(result.segmentsPath, "utf-8");
    expect(validateJsonl(content)).toBe(result.segmentCount);

    const lines = content.trim().split("\n").map((l) => JSON.parse(l));
    let previousStart = -Infinity;
    for (const line of lines) {
      const seg = segmentLineSchema.parse(line);
      expect(seg.utterance.trim().length).toBeGreaterThan(0);
      expect(seg.role).toBeNull();
      expect(seg.t_start).toBeGreaterThanOrEqual(previousStart);
      expect(seg.t_end).toBeGreaterThan(seg.t_start);
      previousStart = seg.t_start;
    }

    expect(result.enrollmentPath).not.toBeNull();
    const enrollment = JSON.parse(fs.readFileSync(result.enrollmentPath!, "utf-8"));
    const norm = Math.sqrt(enrollment.reduce((a: number, v: number) => a + v * v, 0));
    expect(Math.abs(norm - 1)).toBeLessThan(1e-6);
  });

  it("separates the clip's four bursts", () => {
    const out = tmpdir();
    const result = ingest(CLIP, CONFIG, out);
    expect(result.segmentCount).toBe(4);
  });

  it("emits a valid empty file for silence", () => {
    const out = tmpdir();
    const result = ingest(SILENCE, CONFIG, out);
    expect(result.segmentCount).toBe(0);
    expect(fs.readFileSync(result.segmentsPath, "utf-8")).toBe("");
  });

  it("fails on a missing model before reading audio", () => {
    const out = tmpdir();
    const missingAudio = path.join(out, "no-such-audio.wav");
    expect(() =>
      ingest(missingAudio, { ...CONFIG, embedding: "builtin:nope" }, out)
    ).toThrow(ModelLoadError); // not AudioDecodeError: models load first
  });

  it("is deterministic", () => {
    const a = tmpdir();
    const b = tmpdir();
    ingest(CLIP, CONFIG, a);
    ingest(CLIP, CONFIG, b);
    expect(fs.readFileSync(path.join(a, "segments.jsonl"), "utf-8")).toBe(
      fs.readFileSync(path.join(b, "segments.jsonl"), "utf-8")
    );
  });
});
