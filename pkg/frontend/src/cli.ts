#!/usr/bin/env node
/**
 * plots render --figure fig6a --in results/ --out figs/
 * plots render-all --in results/ --out figs/     (skips figures with missing inputs)
 * plots list
 */

import { SchemaError } from "./csv.js";
import { FIGURES, figureById } from "./figures.js";
import { renderFigure } from "./render.js";
import { existsSync } from "node:fs";

function getFlag(argv: string[], name: string): string | undefined {
  const i = argv.indexOf(name);
  return i >= 0 && i + 1 < argv.length ? argv[i + 1] : undefined;
}

function main(argv: string[]): number {
  const cmd = argv[0];
  if (cmd === "list") {
    for (const f of FIGURES) {
      console.log(`${f.id}: ${f.inputs.join(", ")}`);
    }
    return 0;
  }
  const inDir = getFlag(argv, "--in") ?? "results";
  const outDir = getFlag(argv, "--out") ?? "figs";
  try {
    if (cmd === "render") {
      const id = getFlag(argv, "--figure");
      if (!id) {
        console.error("usage: plots render --figure <id> --in <dir> --out <dir>");
        return 2;
      }
      const res = renderFigure(id, inDir, outDir);
      console.log(res.image);
      console.log(res.sidecar);
      return 0;
    }
    if (cmd === "render-all") {
      let rendered = 0;
      for (const f of FIGURES) {
        const ready = f.inputs.every((name) => existsSync(`${inDir}/${name}`));
        if (!ready) {
          console.error(`skip ${f.id}: inputs not present under ${inDir}`);
          continue;
        }
        const res = renderFigure(f.id, inDir, outDir);
        console.log(res.image);
        rendered += 1;
      }
      return rendered > 0 ? 0 : 1;
    }
  } catch (err) {
    if (err instanceof SchemaError || err instanceof Error) {
      console.error(`error: ${err.message}`);
      return 1;
    }
    throw err;
  }
  console.error("usage: plots <list|render|render-all> [--figure id] [--in dir] [--out dir]");
  return 2;
}

process.exit(main(process.argv.slice(2)));
