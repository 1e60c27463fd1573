import * as fs from "fs";
import { parseArgs } from "util";
import { ingest } from "./ingest.js";
import { AudioDecodeError, IngestConfig, ModelLoadError } from "./types.js";

const DEFAULT_CONFIG: IngestConfig = {
  enhancement: "builtin:dc-remove",
  vad: "builtin:energy",
  asr: "builtin:marker",
  embedding: "builtin:spectral-hash",
};

function usage(): void {
  console.error(
    "usage: ingest --audio <session.wav> --out <dir> [--config <ingest.json>] [--enrollment-audio <counselor.wav>]"
  );
}

export function main(argv: string[]): number {
  let args;
  try {
    args = parseArgs({
      args: argv,
      options: {
        audio: { type: "string" },
        out: { type: "string" },
        config: { type: "string" },
        "enrollment-audio": { type: "string" },
      },
    });
  } catch (err) {
    console.error((err as Error).message);
    usage();
    return 2;
  }
  const { audio, out, config: configPath } = args.values;
  if (!audio || !out) {
    usage();
    return 2;
  }
  let config: IngestConfig = { ...DEFAULT_CONFIG };
  if (configPath) {
    try {
      config = { ...config, ...JSON.parse(fs.readFileSync(configPath, "utf-8")) };
    } catch (err) {
      console.error(`cannot read config ${configPath}: ${(err as Error).message}`);
      return 2;
    }
  }
  if (args.values["enrollment-audio"]) {
    config.enrollmentAudio = args.values["enrollment-audio"];
  }
  try {
    const result = ingest(audio, config, out);
    console.log(JSON.stringify(result));
    return 0;
  } catch (err) {
    if (err instanceof ModelLoadError) {
      console.error(`model load failed: ${err.message}`);
      return 2;
    }
    if (err instanceof AudioDecodeError) {
      console.error(`audio decode failed: ${err.message}`);
      return 3;
    }
    throw err;
  }
}

if (process.argv[1] && process.argv[1].endsWith("cli.js")) {
  process.exit(main(process.argv.slice(2)));
}
