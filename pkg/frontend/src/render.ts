/**
 * Log-scale convergence chart rendering.
 *
 * One polyline per trace, y on a log10 axis with decade gridlines, x linear
 * in iterations, legend in the top-right. Colors are assigned from a fixed
 * palette in sorted-label order, so the same set of labels always renders
 * identically.
 */

import { writeFileSync } from "node:fs";
import { Column, Trace } from "./csv.js";
import { GLYPH_H, GLYPH_W, glyphFor, textWidth } from "./font.js";
import { encodePng } from "./png.js";

export type Rgb = [number, number, number];

export const PALETTE: Rgb[] = [
  [31, 119, 180],
  [255, 127, 14],
  [44, 160, 44],
  [214, 39, 40],
  [148, 103, 189],
  [140, 86, 75],
  [227, 119, 194],
  [127, 127, 127],
];

const WHITE: Rgb = [255, 255, 255];
const AXIS: Rgb = [40, 40, 40];
const GRID: Rgb = [210, 210, 210];

export class Canvas {
  readonly pixels: Uint8Array;

  constructor(readonly width: number, readonly height: number) {
    this.pixels = new Uint8Array(width * height * 4);
    this.fill(WHITE);
  }

  fill(color: Rgb): void {
    for (let i = 0; i < this.width * this.height; i++) {
      this.pixels.set([...color, 255], i * 4);
    }
  }

  set(x: number, y: number, color: Rgb): void {
    const xi = Math.round(x);
    const yi = Math.round(y);
    if (xi < 0 || yi < 0 || xi >= this.width || yi >= this.height) return;
    this.pixels.set([...color, 255], (yi * this.width + xi) * 4);
  }

  line(x0: number, y0: number, x1: number, y1: number, color: Rgb, thick = 1): void {
    const steps = Math.max(Math.abs(x1 - x0), Math.abs(y1 - y0), 1);
    for (let s = 0; s <= steps; s++) {
      const t = s / steps;
      const x = x0 + (x1 - x0) * t;
      const y = y0 + (y1 - y0) * t;
      for (let dx = 0; dx < thick; dx++) {
        for (let dy = 0; dy < thick; dy++) {
          this.set(x + dx - (thick - 1) / 2, y + dy - (thick - 1) / 2, color);
        }
      }
    }
  }

  rect(x: number, y: number, w: number, h: number, color: Rgb): void {
    for (let dy = 0; dy < h; dy++) {
      for (let dx = 0; dx < w; dx++) {
        this.set(x + dx, y + dy, color);
      }
    }
  }

  text(x: number, y: number, s: string, color: Rgb): void {
    let cx = x;
    for (const ch of s) {
      const rows = glyphFor(ch);
      for (let r = 0; r < GLYPH_H; r++) {
        for (let c = 0; c < GLYPH_W; c++) {
          if ((rows[r] >> (GLYPH_W - 1 - c)) & 1) {
            this.set(cx + c, y + r, color);
          }
        }
      }
      cx += GLYPH_W + 1;
    }
  }
}

export interface PlotResult {
  width: number;
  height: number;
  legendEntries: string[];
  skipped: string[];
  outPath: string;
}

export interface PlotOptions {
  width?: number;
  height?: number;
  warn?: (message: string) => void;
}

function decadeLabel(exponent: number): string {
  return `1e${exponent >= 0 ? "+" : "-"}${Math.abs(exponent)}`;
}

export function plotConvergence(
  traces: Trace[],
  outPath: string,
  metric: Column,
  options: PlotOptions = {},
): PlotResult {
  const width = options.width ?? 800;
  const height = options.height ?? 520;
  const warn = options.warn ?? ((message: string) => console.warn(message));

  const live = [...traces]
    .sort((a, b) => (a.label < b.label ? -1 : a.label > b.label ? 1 : 0))
    .filter((trace) => {
      if (trace.columns[metric].length === 0) {
        warn(`skipping empty trace ${trace.path}`);
        return false;
      }
      return true;
    });
  const skipped = traces.filter((t) => !live.includes(t)).map((t) => t.path);
  if (live.length === 0) {
    throw new Error("no non-empty traces to plot");
  }

  const margin = { left: 70, right: 20, top: 20, bottom: 45 };
  const plotW = width - margin.left - margin.right;
  const plotH = height - margin.top - margin.bottom;

  let xMax = 1;
  let yMin = Infinity;
  let yMax = -Infinity;
  for (const trace of live) {
    xMax = Math.max(xMax, ...trace.columns.iteration);
    for (const v of trace.columns[metric]) {
      if (v > 0) {
        yMin = Math.min(yMin, v);
        yMax = Math.max(yMax, v);
      }
    }
  }
  if (!Number.isFinite(yMin)) {
    throw new Error(`metric '${metric}' has no positive values; cannot use a log scale`);
  }
  const expLo = Math.floor(Math.log10(yMin));
  const expHi = Math.ceil(Math.log10(yMax));
  const span = Math.max(expHi - expLo, 1);

  const xPix = (k: number) => margin.left + (k / xMax) * plotW;
  const yPix = (v: number) =>
    margin.top + plotH - ((Math.log10(v) - expLo) / span) * plotH;

  const canvas = new Canvas(width, height);

  for (let e = expLo; e <= expHi; e++) {
    const y = yPix(10 ** e);
    canvas.line(margin.left, y, width - margin.right, y, GRID);
    canvas.text(6, y - GLYPH_H / 2, decadeLabel(e), AXIS);
  }
  const xTicks = 5;
  for (let i = 0; i <= xTicks; i++) {
    const k = Math.round((xMax * i) / xTicks);
    const x = xPix(k);
    canvas.line(x, height - margin.bottom, x, height - margin.bottom + 4, AXIS);
    const label = String(k);
    canvas.text(x - textWidth(label) / 2, height - margin.bottom + 8, label, AXIS);
  }
  canvas.line(margin.left, margin.top, margin.left, height - margin.bottom, AXIS);
  canvas.line(margin.left, height - margin.bottom, width - margin.right, height - margin.bottom, AXIS);
  canvas.text(
    margin.left + plotW / 2 - textWidth("iteration") / 2,
    height - GLYPH_H - 6,
    "iteration",
    AXIS,
  );
  canvas.text(6, 6, metric, AXIS);

  const legendEntries: string[] = [];
  live.forEach((trace, idx) => {
    const color = PALETTE[idx % PALETTE.length];
    const xs = trace.columns.iteration;
    const ys = trace.columns[metric];
    let prev: [number, number] | null = null;
    for (let i = 0; i < xs.length; i++) {
      if (ys[i] <= 0) {
        prev = null; // log scale cannot show it; break the line
        continue;
      }
      const pt: [number, number] = [xPix(xs[i]), yPix(ys[i])];
      if (prev) canvas.line(prev[0], prev[1], pt[0], pt[1], color, 2);
      prev = pt;
    }
    legendEntries.push(trace.label);
  });

  const legendW = Math.max(...legendEntries.map(textWidth)) + 26;
  const legendX = width - margin.right - legendW - 6;
  let legendY = margin.top + 6;
  canvas.rect(legendX - 4, legendY - 4, legendW + 8, legendEntries.length * 12 + 8, WHITE);
  legendEntries.forEach((label, idx) => {
    canvas.rect(legendX, legendY + 1, 14, 5, PALETTE[idx % PALETTE.length]);
    canvas.text(legendX + 18, legendY, label, AXIS);
    legendY += 12;
  });

  writeFileSync(outPath, encodePng(width, height, canvas.pixels));
  return { width, height, legendEntries, skipped, outPath };
}
