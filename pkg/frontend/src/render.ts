/**
 * Figure rendering plus the sidecar value dump.
 *
 * The sidecar (<figure>.values.txt) repeats every input CSV body byte for
 * byte (header and data rows, provenance comment dropped), one section per
 * input file, so "the plot never altered the numbers" is checkable with a
 * string comparison.
 */

import { mkdirSync, writeFileSync } from "node:fs";
import { figureById, loadInputs } from "./figures.js";

export interface RenderResult {
  image: string;
  sidecar: string;
}

export function sidecarText(inputNames: string[], bodies: string[]): string {
  let out = "";
  inputNames.forEach((name, i) => {
    out += `== ${name}\n${bodies[i]}`;
  });
  return out;
}

export function renderFigure(id: string, inDir: string, outDir: string): RenderResult {
  const spec = figureById(id);
  const tables = loadInputs(spec, inDir);
  const artifact = spec.render(tables);
  mkdirSync(outDir, { recursive: true });
  const image = `${outDir}/${spec.id}.${spec.ext}`;
  writeFileSync(image, artifact);
  const sidecar = `${outDir}/${spec.id}.values.txt`;
  writeFileSync(sidecar, sidecarText(spec.inputs, tables.map((t) => t.body)));
  return { image, sidecar };
}
