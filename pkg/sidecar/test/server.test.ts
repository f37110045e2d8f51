import { describe, expect, it } from "vitest";

import { parseFrequencyTable } from "../src/freq.js";
import { encodeLine, parseRequest, splitLines } from "../src/protocol.js";
import { handleLine, type ServerConfig } from "../src/server.js";

const CONFIG: ServerConfig = {
  table: parseFrequencyTable("str 100\nint 50\n"),
  kCap: 10,
};

function request(id: number, k = 1): string {
  return JSON.stringify({ id, function: "f", kind: "argument", name: "x", k, context: [] });
}

describe("protocol", () => {
  it("splits buffered chunks into lines", () => {
    const { lines, rest } = splitLines('{"a":1}\n{"b":2}\npartial');
    expect(lines).toEqual(['{"a":1}', '{"b":2}']);
    expect(rest).toBe("partial");
  });

  it("encodes one object per line", () => {
    expect(encodeLine({ id: 1 })).toBe('{"id":1}\n');
  });

  it("rejects requests without a numeric id", () => {
    expect(() => parseRequest('{"function":"f"}')).toThrow(/numeric id/);
    expect(() => parseRequest("[1,2]")).toThrow(/not an object/);
  });

  it("ignores unknown fields", () => {
    const req = parseRequest('{"id": 7, "k": 2, "mystery": true}');
    expect(req.id).toBe(7);
    expect(req.k).toBe(2);
  });
});

describe("handleLine", () => {
  it("echoes the request id verbatim", () => {
    const response = handleLine(CONFIG, request(41));
    expect(response?.id).toBe(41);
    expect(response?.candidates?.[0]).toEqual({ type: "str", score: 100 / 150 });
  });

  it("answers every request exactly once, in order", () => {
    const responses = [request(1), request(2, 2), request(3)].map((line) =>
      handleLine(CONFIG, line),
    );
    expect(responses.map((r) => r?.id)).toEqual([1, 2, 3]);
    expect(responses[1]?.candidates).toHaveLength(2);
  });

  it("responds id:null with an error for malformed lines and keeps going", () => {
    const bad = handleLine(CONFIG, "{not json");
    expect(bad?.id).toBeNull();
    expect(bad?.error).toMatch(/unparseable/);
    const next = handleLine(CONFIG, request(9));
    expect(next?.id).toBe(9);
  });

  it("skips blank lines", () => {
    expect(handleLine(CONFIG, "   ")).toBeNull();
  });

  it("caps k", () => {
    const capped = handleLine({ ...CONFIG, kCap: 1 }, request(5, 5));
    expect(capped?.candidates).toHaveLength(1);
  });

  it("uses the plugin and falls back to the table when it throws", () => {
    const withPlugin: ServerConfig = {
      ...CONFIG,
      predict: (fn, kind, name) => [{ type: `${kind}:${name}`, score: 1.0 }],
    };
    const fromPlugin = handleLine(withPlugin, request(1));
    expect(fromPlugin?.candidates?.[0].type).toBe("argument:x");

    const throwing: ServerConfig = {
      ...CONFIG,
      predict: () => {
        throw new Error("model exploded");
      },
    };
    const fallback = handleLine(throwing, request(2));
    expect(fallback?.candidates?.[0].type).toBe("str");
  });
});
