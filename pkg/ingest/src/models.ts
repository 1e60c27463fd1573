import { ModelLoadError, SpeechInterval } from "./types.js";
import { Waveform } from "./wav.js";

/**
 * Model stack behind configurable identifiers.
 *
 * The adapter treats enhancement, VAD, ASR, and speaker-embedding models
 * as external black boxes. "builtin:*" identifiers map to lightweight
 * DSP stand-ins so the full contract runs without neural checkpoints;
 * production deployments register real runners here. Any identifier that
 * does not resolve fails at load time, before audio is touched.
 */

export type Enhancer = (wave: Waveform) => Waveform;
export type Vad = (wave: Waveform) => SpeechInterval[];
export type Asr = (wave: Waveform, interval: SpeechInterval, index: number) => string;
export type Embedder = (wave: Waveform, interval: SpeechInterval) => number[];

const FRAME_SECONDS = 0.03;
const VAD_RMS_THRESHOLD = 0.02;
const VAD_MIN_SPEECH_SECONDS = 0.2;
const VAD_HANGOVER_FRAMES = 2;
export const EMBEDDING_DIM = 16;

function passthroughEnhancer(wave: Waveform): Waveform {
  return wave;
}

function dcRemoveEnhancer(wave: Waveform): Waveform {
  let mean = 0;
  for (const s of wave.samples) mean += s;
  mean /= wave.samples.length || 1;
  const out = new Float32Array(wave.samples.length);
  for (let i = 0; i < out.length; i++) out[i] = wave.samples[i] - mean;
  return { samples: out, sampleRate: wave.sampleRate };
}

function energyVad(wave: Waveform): SpeechInterval[] {
  const frameLen = Math.max(1, Math.round(wave.sampleRate * FRAME_SECONDS));
  const frames = Math.floor(wave.samples.length / frameLen);
  const voiced: boolean[] = new Array(frames).fill(false);
  for (let f = 0; f < frames; f++) {
    let acc = 0;
    for (let i = f * frameLen; i < (f + 1) * frameLen; i++) {
      acc += wave.samples[i] * wave.samples[i];
    }
    voiced[f] = Math.sqrt(acc / frameLen) > VAD_RMS_THRESHOLD;
  }
  // hangover: keep short dips inside speech
  let sinceVoiced = Infinity;
  for (let f = 0; f < frames; f++) {
    if (voiced[f]) sinceVoiced = 0;
    else if (sinceVoiced++ < VAD_HANGOVER_FRAMES) voiced[f] = true;
  }
  const intervals: SpeechInterval[] = [];
  let start = -1;
  for (let f = 0; f <= frames; f++) {
    const on = f < frames && voiced[f];
    if (on && start < 0) start = f;
    if (!on && start >= 0) {
      const seconds = ((f - start) * frameLen) / wave.sampleRate;
      if (seconds >= VAD_MIN_SPEECH_SECONDS) {
        intervals.push({
          start: (start * frameLen) / wave.sampleRate,
          end: (f * frameLen) / wave.sampleRate,
        });
      }
      start = -1;
    }
  }
  return intervals;
}

/** Placeholder transcription; content is model-dependent and untested. */
function markerAsr(_wave: Waveform, interval: SpeechInterval, index: number): string {
  return `speech segment ${index + 1} (${interval.start.toFixed(2)}s-${interval.end.toFixed(2)}s)`;
}

/**
 * Deterministic acoustic fingerprint: band energies via Goertzel plus
 * normalized autocorrelation lags, projected to the unit sphere.
 */
function spectralHashEmbedder(wave: Waveform, interval: SpeechInterval): number[] {
  const begin = Math.floor(interval.start * wave.sampleRate);
  const finish = Math.min(wave.samples.length, Math.floor(interval.end * wave.sampleRate));
  const seg = wave.samples.subarray(begin, finish);
  const out = new Array<number>(EMBEDDING_DIM).fill(0);
  if (seg.length > 1) {
    const bands = [120, 240, 480, 800, 1200, 1800, 2600, 3400];
    for (let b = 0; b < bands.length; b++) {
      const w = (2 * Math.PI * bands[b]) / wave.sampleRate;
      const coeff = 2 * Math.cos(w);
      let s0 = 0, s1 = 0, s2 = 0;
      for (let i = 0; i < seg.length; i++) {
        s0 = seg[i] + coeff * s1 - s2;
        s2 = s1;
        s1 = s0;
      }
      const power = s1 * s1 + s2 * s2 - coeff * s1 * s2;
      out[b] = Math.log1p(Math.max(0, power) / seg.length);
    }
    let energy = 0;
    for (let i = 0; i < seg.length; i++) energy += seg[i] * seg[i];
    for (let lag = 1; lag <= 8; lag++) {
      const step = lag * 8;
      let acc = 0;
      for (let i = step; i < seg.length; i++) acc += seg[i] * seg[i - step];
      out[7 + lag] = energy > 0 ? acc / energy : 0;
    }
  }
  let norm = Math.sqrt(out.reduce((a, v) => a + v * v, 0));
  if (norm < 1e-9) {
    out[0] = 1;
    norm = 1;
  }
  return out.map((v) => v / norm);
}

const BUILTIN_ENHANCERS: Record<string, Enhancer> = {
  passthrough: passthroughEnhancer,
  "dc-remove": dcRemoveEnhancer,
};
const BUILTIN_VADS: Record<string, Vad> = { energy: energyVad };
const BUILTIN_ASRS: Record<string, Asr> = { marker: markerAsr };
const BUILTIN_EMBEDDERS: Record<string, Embedder> = { "spectral-hash": spectralHashEmbedder };

function resolve<T>(kind: string, identifier: string, registry: Record<string, T>): T {
  if (!identifier) {
    throw new ModelLoadError(`no ${kind} model configured`);
  }
  if (identifier.startsWith("builtin:")) {
    const name = identifier.slice("builtin:".length);
    const model = registry[name];
    if (!model) {
      throw new ModelLoadError(`unknown builtin ${kind} model: ${name}`);
    }
    return model;
  }
  throw new ModelLoadError(
    `${kind} model ${identifier} is not resolvable: no external runtime registered (use builtin:*)`
  );
}

export interface ModelStack {
  enhance: Enhancer;
  vad: Vad;
  asr: Asr;
  embed: Embedder;
}

/** Resolve every configured identifier up front; fails before any audio read. */
export function loadModels(config: {
  enhancement: string;
  vad: string;
  asr: string;
  embedding: string;
}): ModelStack {
  return {
    enhance: resolve("enhancement", config.enhancement, BUILTIN_ENHANCERS),
    vad: resolve("vad", config.vad, BUILTIN_VADS),
    asr: resolve("asr", config.asr, BUILTIN_ASRS),
    embed: resolve("embedding", config.embedding, BUILTIN_EMBEDDERS),
  };
}
