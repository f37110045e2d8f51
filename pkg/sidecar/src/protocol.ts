import type { Candidate } from "./freq.js";

export interface RecommendRequest {
  id: number;
  function: string;
  kind: string;
  name: string;
  k: number;
  context: string[];
}

export interface RecommendResponse {
  id: number | null;
  candidates?: Candidate[];
  error?: string;
}

export function encodeLine(value: unknown): string {
  return `${JSON.stringify(value)}\n`;
}

export function splitLines(buffer: string): { lines: string[]; rest: string } {
  const lines: string[] = [];
  let rest = buffer;
  while (true) {
    const nl = rest.indexOf("\n");
    if (nl < 0) break;
    lines.push(rest.slice(0, nl));
    rest = rest.slice(nl + 1);
  }
  return { lines, rest };
}

/** Parse one request line; a descriptive Error for anything malformed. */
export function parseRequest(line: string): RecommendRequest {
  let value: unknown;
  try {
    value = JSON.parse(line);
  } catch (error) {
    throw new Error(`unparseable request line: ${(error as Error).message}`);
  }
  if (typeof value !== "object" || value === null || Array.isArray(value)) {
    throw new Error("request is not an object");
  }
  const obj = value as Record<string, unknown>;
  if (typeof obj.id !== "number") {
    throw new Error("request has no numeric id");
  }
  return {
    id: obj.id,
    function: typeof obj.function === "string" ? obj.function : "",
    kind: typeof obj.kind === "string" ? obj.kind : "",
    name: typeof obj.name === "string" ? obj.name : "",
    k: typeof obj.k === "number" ? obj.k : 1,
    context: Array.isArray(obj.context) ? obj.context.map(String) : [],
  };
}
