import { readFileSync } from "node:fs";
import { pathToFileURL } from "node:url";
import { stdin, stdout, exit, argv, stderr } from "node:process";

import { parseFrequencyTable } from "./freq.js";
import { encodeLine, splitLines } from "./protocol.js";
import { handleLine, type PredictFn, type ServerConfig } from "./server.js";

interface CliArgs {
  table?: string;
  plugin?: string;
  kCap: number;
}

function parseArgs(args: string[]): CliArgs {
  const out: CliArgs = { kCap: 10 };
  for (let i = 0; i < args.length; i += 1) {
    const arg = args[i];
    if (arg === "--table") out.table = args[++i];
    else if (arg === "--plugin") out.plugin = args[++i];
    else if (arg === "--k-cap") out.kCap = Number(args[++i]);
    else throw new Error(`unknown argument: ${arg}`);
  }
  return out;
}

async function loadPlugin(specifier: string): Promise<PredictFn | undefined> {
  try {
    const mod = await import(pathToFileURL(specifier).href);
    const predict = mod.predict ?? mod.default?.predict;
    if (typeof predict === "function") return predict as PredictFn;
    stderr.write(`plugin ${specifier} exports no predict();` + " using the table\n");
  } catch (error) {
    stderr.write(`plugin load failed: ${(error as Error).message}; using the table\n`);
  }
  return undefined;
}

async function main(): Promise<number> {
  const args = parseArgs(argv.slice(2));
  const config: ServerConfig = {
    table: args.table ? parseFrequencyTable(readFileSync(args.table, "utf-8")) : [],
    predict: args.plugin ? await loadPlugin(args.plugin) : undefined,
    kCap: Number.isFinite(args.kCap) ? args.kCap : 10,
  };

  stdin.setEncoding("utf-8");
  let buffer = "";
  for await (const chunk of stdin) {
    buffer += chunk;
    const { lines, rest } = splitLines(buffer);
    buffer = rest;
    for (const line of lines) {
      const response = handleLine(config, line);
      if (response !== null) stdout.write(encodeLine(response));
    }
  }
  if (buffer.trim()) {
    const response = handleLine(config, buffer);
    if (response !== null) stdout.write(encodeLine(response));
  }
  return 0;
}

main().then(
  (code) => exit(code),
  (error) => {
    stderr.write(`fatal: ${(error as Error).message}\n`);
    exit(1);
  },
);
