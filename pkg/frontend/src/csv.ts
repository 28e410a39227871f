/**
 * CSV ingestion for the harness output format: one `# provenance:` comment
 * line, a header row, then numeric/string cells.  Parsing is strict about
 * the expected column set; `inf`/`-inf` map to the JS infinities.
 */

import { readFileSync } from "node:fs";

export class SchemaError extends Error {}

export interface Table {
  /** column names, in file order */
  columns: string[];
  /** raw cell strings, exactly as read (the sidecar echoes these) */
  raw: string[][];
  /** numeric view of the cells; NaN for non-numeric cells */
  rows: Record<string, number>[];
  /** string view of the cells */
  cells: Record<string, string>[];
  /** header + data lines verbatim (no provenance comment) */
  body: string;
}

function toNumber(cell: string): number {
  if (cell === "inf") return Infinity;
  if (cell === "-inf") return -Infinity;
  const v = Number(cell);
  return Number.isNaN(v) && cell !== "nan" ? NaN : v;
}

export function parseCsv(path: string, expectedColumns: string[]): Table {
  let text: string;
  try {
    text = readFileSync(path, "utf-8");
  } catch {
    throw new SchemaError(`missing input file: ${path}`);
  }
  const lines = text.split("\n").filter((l) => l.length > 0);
  const dataLines = lines.filter((l) => !l.startsWith("#"));
  if (dataLines.length === 0) {
    throw new SchemaError(`${path}: no header row`);
  }
  const columns = dataLines[0].split(",");
  const missing = expectedColumns.filter((c) => !columns.includes(c));
  if (missing.length > 0) {
    throw new SchemaError(`${path}: missing columns: ${missing.join(", ")}`);
  }
  const raw = dataLines.slice(1).map((l) => l.split(","));
  if (raw.length === 0) {
    throw new SchemaError(`${path}: no data rows`);
  }
  for (const cells of raw) {
    if (cells.length !== columns.length) {
      throw new SchemaError(`${path}: ragged row (${cells.length} cells, want ${columns.length})`);
    }
  }
  const rows = raw.map((cells) => {
    const rec: Record<string, number> = {};
    columns.forEach((c, i) => (rec[c] = toNumber(cells[i])));
    return rec;
  });
  const cellsView = raw.map((cells) => {
    const rec: Record<string, string> = {};
    columns.forEach((c, i) => (rec[c] = cells[i]));
    return rec;
  });
  return { columns, raw, rows, cells: cellsView, body: dataLines.join("\n") + "\n" };
}

/** group rows by a string-valued column, preserving first-seen order */
export function groupBy(table: Table, column: string): Map<string, number[]> {
  const out = new Map<string, number[]>();
  table.cells.forEach((rec, i) => {
    const key = rec[column];
    if (!out.has(key)) out.set(key, []);
    out.get(key)!.push(i);
  });
  return out;
}
