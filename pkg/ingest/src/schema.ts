import { z } from "zod";

/** Mirror of the engine's segment JSONL line schema. */
export const segmentLineSchema = z
  .object({
    utterance: z.string().refine((s) => s.trim().length > 0, "utterance must be non-empty"),
    role: z.string().nullable(),
    t_start: z.number().min(0),
    t_end: z.number().min(0),
    embedding: z.array(z.number()).nullable(),
    emotion: z.string().nullable(),
  })
  .refine((seg) => seg.t_start <= seg.t_end, "t_start must not exceed t_end")
  .refine(
    (seg) => {
      if (!seg.embedding) return true;
      const norm = Math.sqrt(seg.embedding.reduce((a, v) => a + v * v, 0));
      return Math.abs(norm - 1) <= 1e-6;
    },
    "embedding must be unit-norm"
  );

export function validateJsonl(content: string): number {
  /** Throws on the first invalid line; returns the number of valid lines. */
  let count = 0;
  for (const [i, line] of content.split("\n").entries()) {
    if (!line.trim()) continue;
    const parsed = segmentLineSchema.safeParse(JSON.parse(line));
    if (!parsed.success) {
      throw new Error(`line ${i + 1}: ${parsed.error.message}`);
    }
    count++;
  }
  return count;
}
