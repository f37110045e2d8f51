import type { Candidate, FreqEntry } from "./freq.js";
import { topCandidates } from "./freq.js";
import { parseRequest, type RecommendRequest, type RecommendResponse } from "./protocol.js";

/**
 * A plugin wraps a real prediction model: given the slot description it
 * returns ranked candidates. Anything it throws falls back to the
 * frequency table.
 */
export type PredictFn = (
  functionName: string,
  kind: string,
  name: string,
  context: string[],
  k: number,
) => Array<Candidate | [string, number]>;

export interface ServerConfig {
  table: FreqEntry[];
  predict?: PredictFn;
  kCap: number;
}

function normalizeCandidates(raw: Array<Candidate | [string, number]>): Candidate[] {
  return raw.map((item) =>
    Array.isArray(item) ? { type: String(item[0]), score: Number(item[1]) } : item,
  );
}

function candidatesFor(config: ServerConfig, request: RecommendRequest): Candidate[] {
  const k = Math.max(0, Math.min(request.k, config.kCap));
  if (config.predict) {
    try {
      const predicted = normalizeCandidates(
        config.predict(request.function, request.kind, request.name, request.context, k),
      );
      return predicted.slice(0, k);
    } catch {
      // fall through to the frequency table
    }
  }
  return topCandidates(config.table, k);
}

/** One response per request line; malformed lines get an id:null error. */
export function handleLine(config: ServerConfig, line: string): RecommendResponse | null {
  if (!line.trim()) return null;
  let request: RecommendRequest;
  try {
    request = parseRequest(line);
  } catch (error) {
    return { id: null, error: (error as Error).message };
  }
  return { id: request.id, candidates: candidatesFor(config, request) };
}
