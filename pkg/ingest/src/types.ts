export interface IngestConfig {
  /** Model identifiers: "builtin:<name>" or a registered external id. */
  enhancement: string;
  vad: string;
  asr: string;
  embedding: string;
  /** Counselor enrollment audio; its embedding anchors role assignment downstream. */
  enrollmentAudio?: string;
}

export interface SpeechInterval {
  start: number; // seconds
  end: number;
}

/** One line of the engine's segment JSONL. Role stays null: the engine assigns roles. */
export interface SegmentLine {
  utterance: string;
  role: null;
  t_start: number;
  t_end: number;
  embedding: number[];
  emotion: string | null;
}

export class ModelLoadError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ModelLoadError";
  }
}

export class AudioDecodeError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "AudioDecodeError";
  }
}
