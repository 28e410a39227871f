/**
 * The shipped figure specifications: which CSV files each figure consumes,
 * their required columns, and how the chart is assembled.  Rendering never
 * transforms the numbers (dB conversion happens upstream in the harness);
 * a sidecar dump echoes every input body verbatim.
 */

import { groupBy, parseCsv, SchemaError, Table } from "./csv.js";
import { renderChart, renderPair, Series } from "./svg.js";

export const RATE_COLS = ["series", "snr_db", "rate_mean", "rate_std", "n_channels"];
export const RADIATION_COLS = ["angle_deg", "p_lin_db", "p_dist_db", "p_sdr_db"];
export const SCATTER_COLS = ["series", "s_re", "s_im", "shat_re", "shat_im"];
export const POWER_COLS = ["b_hz", "p_dacs_w", "p_gnn_w", "p_total_w", "req_flops_per_s"];
export const NMSE_COLS = ["precoder", "b", "nmse_db"];

export interface FigureSpec {
  id: string;
  inputs: string[];
  columns: string[];
  /** file extension of the rendered artifact */
  ext: "svg" | "txt";
  render: (tables: Table[]) => string;
}

function rateSeries(table: Table): Series[] {
  const groups = groupBy(table, "series");
  return [...groups.entries()].map(([name, idx]) => ({
    name,
    x: idx.map((i) => table.rows[i].snr_db),
    y: idx.map((i) => table.rows[i].rate_mean),
    kind: "line" as const,
  }));
}

function rateFigure(title: string) {
  return (tables: Table[]) =>
    renderChart(title, { label: "transmit SNR [dB]" }, { label: "sum rate [bits/channel use]" }, rateSeries(tables[0]));
}

function radiationChart(title: string, table: Table): string {
  const x = table.rows.map((r) => r.angle_deg);
  const series: Series[] = [
    { name: "intended", x, y: table.rows.map((r) => r.p_lin_db), kind: "line" },
    { name: "distortion", x, y: table.rows.map((r) => r.p_dist_db), kind: "line" },
    { name: "SDR", x, y: table.rows.map((r) => r.p_sdr_db), kind: "line" },
  ];
  return renderChart(title, { label: "angle [deg]" }, { label: "power [dB]" }, series);
}

function powerFigure(title: string, inputs: string[]) {
  return (tables: Table[]) => {
    const series: Series[] = tables.map((t, i) => ({
      name: inputs[i].replace(/^fig\d+_power_/, "").replace(/\.csv$/, ""),
      x: t.rows.map((r) => r.b_hz),
      y: t.rows.map((r) => r.p_total_w),
      kind: "line" as const,
    }));
    return renderChart(title, { label: "bandwidth [Hz]" }, { label: "power [W]" }, series);
  };
}

function scatterFigure(tables: Table[]): string {
  const t = tables[0];
  const groups = groupBy(t, "series");
  const series: Series[] = [...groups.entries()].map(([name, idx]) => ({
    name,
    x: idx.map((i) => t.rows[i].s_re),
    y: idx.map((i) => t.rows[i].shat_re),
    kind: "scatter" as const,
  }));
  return renderChart(
    "transmitted vs equalized received symbol (real part)",
    { label: "Re s" },
    { label: "Re s-hat" },
    series,
  );
}

function nmseTable(tables: Table[]): string {
  const t = tables[0];
  const precoders = [...groupBy(t, "precoder").keys()];
  const bits = [...new Set(t.cells.map((r) => r.b))];
  const width = Math.max(12, ...precoders.map((p) => p.length + 2));
  let out = "NMSE [dB], noiseless test channels\n";
  out += "precoder".padEnd(width) + bits.map((b) => `b=${b}`.padStart(10)).join("") + "\n";
  for (const p of precoders) {
    let line = p.padEnd(width);
    for (const b of bits) {
      const row = t.cells.findIndex((r) => r.precoder === p && r.b === b);
      line += (row >= 0 ? t.cells[row].nmse_db : "-").padStart(10);
    }
    out += line + "\n";
  }
  return out;
}

const fig9Inputs = [
  "fig9_power_gnn_dacs.csv",
  "fig9_power_mrt_dacs.csv",
  "fig9_power_gnn_total_d128.csv",
  "fig9_power_gnn_total_d32.csv",
];
const fig10Inputs = fig9Inputs.map((f) => f.replace("fig9", "fig10"));

export const FIGURES: FigureSpec[] = [
  {
    id: "fig6a",
    inputs: ["fig6a_rates.csv"],
    columns: RATE_COLS,
    ext: "svg",
    render: rateFigure("single-user achievable rate vs SNR (M=32)"),
  },
  {
    id: "fig6b",
    inputs: ["fig6b_rates.csv"],
    columns: RATE_COLS,
    ext: "svg",
    render: rateFigure("multi-user sum rate vs SNR, one-bit DACs (M=32)"),
  },
  {
    id: "fig3",
    inputs: ["fig3_rad_mrt_phi90.csv"],
    columns: RADIATION_COLS,
    ext: "svg",
    render: (t) => radiationChart("one-bit MRT radiation pattern, user at 90 deg", t[0]),
  },
  {
    id: "fig4",
    inputs: ["fig4_rad_zf_k2.csv", "fig4_rad_zf_k6.csv"],
    columns: RADIATION_COLS,
    ext: "svg",
    render: (t) =>
      renderPair(
        radiationChart("one-bit ZF radiation, K=2", t[0]),
        radiationChart("one-bit ZF radiation, K=6", t[1]),
      ),
  },
  {
    id: "fig7",
    inputs: ["fig7_scatter.csv"],
    columns: SCATTER_COLS,
    ext: "svg",
    render: scatterFigure,
  },
  {
    id: "fig8",
    inputs: ["fig8_rad_gnn.csv"],
    columns: RADIATION_COLS,
    ext: "svg",
    render: (t) => radiationChart("learned precoder radiation pattern", t[0]),
  },
  {
    id: "fig9",
    inputs: fig9Inputs,
    columns: POWER_COLS,
    ext: "svg",
    render: powerFigure("baseband DAC + processing power vs bandwidth", fig9Inputs),
  },
  {
    id: "fig10",
    inputs: fig10Inputs,
    columns: POWER_COLS,
    ext: "svg",
    render: powerFigure("RF-DAC + processing power vs bandwidth", fig10Inputs),
  },
  {
    id: "tab1",
    inputs: ["tab1_nmse.csv"],
    columns: NMSE_COLS,
    ext: "txt",
    render: nmseTable,
  },
];

export function figureById(id: string): FigureSpec {
  const spec = FIGURES.find((f) => f.id === id);
  if (!spec) {
    throw new SchemaError(`unknown figure id: ${id} (know ${FIGURES.map((f) => f.id).join(", ")})`);
  }
  return spec;
}

export function loadInputs(spec: FigureSpec, inDir: string): Table[] {
  return spec.inputs.map((name) => parseCsv(`${inDir}/${name}`, spec.columns));
}
