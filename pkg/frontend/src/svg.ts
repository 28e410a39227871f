/**
 * Minimal deterministic SVG chart builder: fixed canvas, fixed palette,
 * linear or log axes, polyline series, scatter marks, legend.  No
 * randomness, no timestamps - byte-identical output for identical input.
 */

const PALETTE = [
  "#1f77b4",
  "#ff7f0e",
  "#2ca02c",
  "#d62728",
  "#9467bd",
  "#8c564b",
  "#e377c2",
  "#7f7f7f",
];

export interface Series {
  name: string;
  x: number[];
  y: number[];
  kind: "line" | "scatter";
}

export interface AxisSpec {
  label: string;
  log?: boolean;
}

const W = 720;
const H = 480;
const MARGIN = { left: 70, right: 20, top: 36, bottom: 50 };

function fmt(v: number): string {
  return Number(v.toPrecision(6)).toString();
}

function niceTicks(lo: number, hi: number, n = 6): number[] {
  if (!(hi > lo)) return [lo];
  const span = hi - lo;
  const step0 = span / n;
  const mag = Math.pow(10, Math.floor(Math.log10(step0)));
  const candidates = [1, 2, 2.5, 5, 10].map((c) => c * mag);
  const step = candidates.find((c) => span / c <= n) ?? candidates[candidates.length - 1];
  const first = Math.ceil(lo / step) * step;
  const ticks: number[] = [];
  for (let v = first; v <= hi + 1e-12 * span; v += step) ticks.push(Number(v.toPrecision(12)));
  return ticks;
}

export function renderChart(
  title: string,
  xAxis: AxisSpec,
  yAxis: AxisSpec,
  series: Series[],
): string {
  const finite = (vals: number[]) => vals.filter((v) => Number.isFinite(v));
  const xs = finite(series.flatMap((s) => s.x.map((v) => (xAxis.log ? Math.log10(v) : v))));
  const ys = finite(series.flatMap((s) => s.y.map((v) => (yAxis.log ? Math.log10(v) : v))));
  if (xs.length === 0 || ys.length === 0) {
    throw new Error(`nothing finite to plot for ${title}`);
  }
  let x0 = Math.min(...xs);
  let x1 = Math.max(...xs);
  let y0 = Math.min(...ys);
  let y1 = Math.max(...ys);
  if (x1 === x0) [x0, x1] = [x0 - 1, x1 + 1];
  if (y1 === y0) [y0, y1] = [y0 - 1, y1 + 1];
  const padY = 0.05 * (y1 - y0);
  y0 -= padY;
  y1 += padY;

  const plotW = W - MARGIN.left - MARGIN.right;
  const plotH = H - MARGIN.top - MARGIN.bottom;
  const sx = (v: number) => MARGIN.left + ((v - x0) / (x1 - x0)) * plotW;
  const sy = (v: number) => MARGIN.top + (1 - (v - y0) / (y1 - y0)) * plotH;
  const tx = (v: number) => (xAxis.log ? Math.log10(v) : v);
  const ty = (v: number) => (yAxis.log ? Math.log10(v) : v);

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${W}" height="${H}" viewBox="0 0 ${W} ${H}" font-family="Helvetica,Arial,sans-serif" font-size="12">`,
  );
  parts.push(`<rect width="${W}" height="${H}" fill="white"/>`);
  parts.push(`<text x="${W / 2}" y="20" text-anchor="middle" font-size="14">${title}</text>`);

  for (const t of niceTicks(x0, x1)) {
    const px = sx(t);
    parts.push(`<line x1="${fmt(px)}" y1="${MARGIN.top}" x2="${fmt(px)}" y2="${H - MARGIN.bottom}" stroke="#dddddd"/>`);
    const label = xAxis.log ? `1e${fmt(t)}` : fmt(t);
    parts.push(
      `<text x="${fmt(px)}" y="${H - MARGIN.bottom + 16}" text-anchor="middle">${label}</text>`,
    );
  }
  for (const t of niceTicks(y0, y1)) {
    const py = sy(t);
    parts.push(`<line x1="${MARGIN.left}" y1="${fmt(py)}" x2="${W - MARGIN.right}" y2="${fmt(py)}" stroke="#dddddd"/>`);
    const label = yAxis.log ? `1e${fmt(t)}` : fmt(t);
    parts.push(`<text x="${MARGIN.left - 6}" y="${fmt(py + 4)}" text-anchor="end">${label}</text>`);
  }
  parts.push(
    `<rect x="${MARGIN.left}" y="${MARGIN.top}" width="${plotW}" height="${plotH}" fill="none" stroke="black"/>`,
  );
  parts.push(
    `<text x="${W / 2}" y="${H - 12}" text-anchor="middle">${xAxis.label}</text>`,
    `<text x="16" y="${H / 2}" text-anchor="middle" transform="rotate(-90 16 ${H / 2})">${yAxis.label}</text>`,
  );

  series.forEach((s, si) => {
    const color = PALETTE[si % PALETTE.length];
    if (s.kind === "line") {
      const pts: string[] = [];
      for (let i = 0; i < s.x.length; i++) {
        const vx = tx(s.x[i]);
        const vy = ty(s.y[i]);
        if (Number.isFinite(vx) && Number.isFinite(vy)) {
          pts.push(`${fmt(sx(vx))},${fmt(sy(vy))}`);
        }
      }
      parts.push(`<polyline points="${pts.join(" ")}" fill="none" stroke="${color}" stroke-width="1.5"/>`);
    } else {
      for (let i = 0; i < s.x.length; i++) {
        const vx = tx(s.x[i]);
        const vy = ty(s.y[i]);
        if (Number.isFinite(vx) && Number.isFinite(vy)) {
          parts.push(`<circle cx="${fmt(sx(vx))}" cy="${fmt(sy(vy))}" r="2" fill="${color}" fill-opacity="0.7"/>`);
        }
      }
    }
    const ly = MARGIN.top + 14 + 16 * si;
    parts.push(
      `<line x1="${W - MARGIN.right - 150}" y1="${ly - 4}" x2="${W - MARGIN.right - 126}" y2="${ly - 4}" stroke="${color}" stroke-width="2"/>`,
      `<text x="${W - MARGIN.right - 120}" y="${ly}">${s.name}</text>`,
    );
  });

  parts.push("</svg>");
  return parts.join("\n") + "\n";
}

/** two charts side by side in one canvas */
export function renderPair(svgLeft: string, svgRight: string): string {
  const inner = (svg: string) => svg.replace(/^<svg[^>]*>/, "").replace(/<\/svg>\s*$/, "");
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" width="${2 * W}" height="${H}" viewBox="0 0 ${2 * W} ${H}">` +
    `<g>${inner(svgLeft)}</g><g transform="translate(${W} 0)">${inner(svgRight)}</g></svg>\n`
  );
}
