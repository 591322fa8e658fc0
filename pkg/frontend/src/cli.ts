#!/usr/bin/env node
/**
 * figkit — figures and reports from simulator CSV output.
 *
 * Usage:
 *   figkit <spectrum|flux|mixing|stopping|energy> --in <csv...> --out <svg>
 *   figkit report <run-dir>
 */

import { promises as fs } from "fs";
import path from "path";
import { SchemaError } from "./csv.js";
import { FigureKind, render } from "./figures.js";
import { buildReport } from "./report.js";

const KINDS = ["spectrum", "flux", "mixing", "stopping", "energy"];

function usage(): string {
  return [
    "usage:",
    "  figkit <spectrum|flux|mixing|stopping|energy> --in <csv...> --out <file.svg>",
    "  figkit report <run-dir>",
  ].join("\n");
}

export async function main(argv: string[]): Promise<number> {
  const [verb, ...rest] = argv;
  if (!verb || verb === "--help" || verb === "-h") {
    console.log(usage());
    return verb ? 0 : 2;
  }

  if (verb === "report") {
    const runDir = rest[0];
    if (!runDir) {
      console.error(usage());
      return 2;
    }
    try {
      const report = await buildReport(runDir);
      const out = path.join(runDir, "report.md");
      await fs.writeFile(out, report);
      console.log(`wrote ${out}`);
      return 0;
    } catch (err) {
      console.error(String(err));
      return 1;
    }
  }

  if (!KINDS.includes(verb)) {
    console.error(`unknown figure kind '${verb}'\n${usage()}`);
    return 2;
  }

  const inputs: string[] = [];
  let out: string | null = null;
  for (let i = 0; i < rest.length; i++) {
    if (rest[i] === "--in") {
      while (i + 1 < rest.length && !rest[i + 1].startsWith("--")) inputs.push(rest[++i]);
    } else if (rest[i] === "--out") {
      out = rest[++i];
    } else {
      console.error(`unexpected argument '${rest[i]}'\n${usage()}`);
      return 2;
    }
  }
  if (inputs.length === 0 || !out) {
    console.error(usage());
    return 2;
  }
  try {
    const texts = await Promise.all(inputs.map((f) => fs.readFile(f, "utf8")));
    const svg = render(verb as FigureKind, texts, inputs.map((f) => path.basename(f)));
    await fs.writeFile(out, svg);
    console.log(`wrote ${out}`);
    return 0;
  } catch (err) {
    if (err instanceof SchemaError) {
      console.error(`schema error: ${err.message}`);
      return 3;
    }
    console.error(String(err));
    return 1;
  }
}

const invokedDirectly = process.argv[1] && import.meta.url.endsWith(path.basename(process.argv[1]));
if (invokedDirectly) {
  main(process.argv.slice(2)).then((code) => process.exit(code));
}
