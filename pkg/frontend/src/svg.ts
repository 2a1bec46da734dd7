/**
 * Minimal deterministic SVG scene builder: linear scales, axes with ticks,
 * and the handful of marks the plot kinds need. No timestamps or random ids
 * are embedded, so re-rendering the same inputs yields byte-identical files.
 */

export interface Margin {
  top: number;
  right: number;
  bottom: number;
  left: number;
}

export const DEFAULT_MARGIN: Margin = { top: 30, right: 20, bottom: 45, left: 60 };

export class LinearScale {
  constructor(
    public d0: number,
    public d1: number,
    public r0: number,
    public r1: number,
  ) {
    if (d0 === d1) {
      // degenerate domain: widen symmetrically so points land mid-range
      this.d0 = d0 - 1;
      this.d1 = d1 + 1;
    }
  }

  map(x: number): number {
    return this.r0 + ((x - this.d0) / (this.d1 - this.d0)) * (this.r1 - this.r0);
  }

  /** Round-number tick values covering the domain (about `count` of them). */
  ticks(count = 6): number[] {
    const span = this.d1 - this.d0;
    const step = Math.pow(10, Math.floor(Math.log10(span / count)));
    const err = (span / count) / step;
    const mult = err >= 7.5 ? 10 : err >= 3.5 ? 5 : err >= 1.5 ? 2 : 1;
    const s = step * mult;
    const start = Math.ceil(this.d0 / s) * s;
    const out: number[] = [];
    for (let v = start; v <= this.d1 + 1e-12 * Math.abs(s); v += s) {
      out.push(Math.abs(v) < 1e-12 * Math.abs(s) ? 0 : v);
    }
    return out;
  }
}

function fmt(x: number): string {
  if (!Number.isFinite(x)) return "0";
  const r = Math.round(x * 1e6) / 1e6;
  return String(r);
}

export function fmtTick(x: number): string {
  if (x === 0) return "0";
  const a = Math.abs(x);
  if (a >= 1e4 || a < 1e-3) return x.toExponential(1);
  return String(Math.round(x * 1e6) / 1e6);
}

const esc = (s: string) => s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");

export class Svg {
  private parts: string[] = [];

  constructor(
    public width: number,
    public height: number,
  ) {}

  rect(x: number, y: number, w: number, h: number, fill: string, opacity = 1): void {
    this.parts.push(
      `<rect x="${fmt(x)}" y="${fmt(y)}" width="${fmt(w)}" height="${fmt(h)}" fill="${fill}"` +
        (opacity !== 1 ? ` fill-opacity="${fmt(opacity)}"` : "") +
        `/>`,
    );
  }

  line(x1: number, y1: number, x2: number, y2: number, stroke: string, width = 1, dash?: string): void {
    this.parts.push(
      `<line x1="${fmt(x1)}" y1="${fmt(y1)}" x2="${fmt(x2)}" y2="${fmt(y2)}" stroke="${stroke}" stroke-width="${fmt(width)}"` +
        (dash ? ` stroke-dasharray="${dash}"` : "") +
        `/>`,
    );
  }

  polyline(points: Array<[number, number]>, stroke: string, width = 1, opacity = 1): void {
    const pts = points.map(([x, y]) => `${fmt(x)},${fmt(y)}`).join(" ");
    this.parts.push(
      `<polyline points="${pts}" fill="none" stroke="${stroke}" stroke-width="${fmt(width)}"` +
        (opacity !== 1 ? ` stroke-opacity="${fmt(opacity)}"` : "") +
        `/>`,
    );
  }

  circle(cx: number, cy: number, r: number, fill: string): void {
    this.parts.push(`<circle cx="${fmt(cx)}" cy="${fmt(cy)}" r="${fmt(r)}" fill="${fill}"/>`);
  }

  text(x: number, y: number, content: string, opts: { size?: number; anchor?: string; rotate?: boolean } = {}): void {
    const size = opts.size ?? 12;
    const anchor = opts.anchor ?? "middle";
    const transform = opts.rotate ? ` transform="rotate(-90 ${fmt(x)} ${fmt(y)})"` : "";
    this.parts.push(
      `<text x="${fmt(x)}" y="${fmt(y)}" font-family="sans-serif" font-size="${size}" text-anchor="${anchor}"${transform}>${esc(content)}</text>`,
    );
  }

  render(): string {
    return (
      `<svg xmlns="http://www.w3.org/2000/svg" width="${this.width}" height="${this.height}" viewBox="0 0 ${this.width} ${this.height}">\n` +
      `<rect width="${this.width}" height="${this.height}" fill="white"/>\n` +
      this.parts.join("\n") +
      `\n</svg>\n`
    );
  }
}

export interface Frame {
  svg: Svg;
  x: LinearScale;
  y: LinearScale;
}

/** Standard plot frame: white canvas, axes with ticks, title and labels. */
export function makeFrame(
  width: number,
  height: number,
  xDomain: [number, number],
  yDomain: [number, number],
  title: string,
  xLabel: string,
  yLabel: string,
  margin: Margin = DEFAULT_MARGIN,
): Frame {
  const svg = new Svg(width, height);
  const x = new LinearScale(xDomain[0], xDomain[1], margin.left, width - margin.right);
  const y = new LinearScale(yDomain[0], yDomain[1], height - margin.bottom, margin.top);

  const bottom = height - margin.bottom;
  svg.line(margin.left, bottom, width - margin.right, bottom, "black");
  svg.line(margin.left, margin.top, margin.left, bottom, "black");
  for (const t of x.ticks()) {
    const px = x.map(t);
    svg.line(px, bottom, px, bottom + 4, "black");
    svg.text(px, bottom + 17, fmtTick(t), { size: 10 });
  }
  for (const t of y.ticks()) {
    const py = y.map(t);
    svg.line(margin.left - 4, py, margin.left, py, "black");
    svg.text(margin.left - 7, py + 3, fmtTick(t), { size: 10, anchor: "end" });
  }
  svg.text(width / 2, margin.top - 12, title, { size: 14 });
  svg.text(width / 2, height - 8, xLabel);
  svg.text(16, height / 2, yLabel, { rotate: true });
  return { svg, x, y };
}

/** Freedman–Diaconis-ish histogram binning with a fixed bin count. */
export function histogram(values: ArrayLike<number>, nBins = 40): { edges: number[]; counts: number[] } {
  let lo = Infinity;
  let hi = -Infinity;
  for (let i = 0; i < values.length; i++) {
    const v = values[i];
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const edges: number[] = [];
  for (let i = 0; i <= nBins; i++) edges.push(lo + ((hi - lo) * i) / nBins);
  const counts = new Array(nBins).fill(0);
  for (let i = 0; i < values.length; i++) {
    let b = Math.floor(((values[i] - lo) / (hi - lo)) * nBins);
    if (b === nBins) b = nBins - 1;
    counts[b]++;
  }
  return { edges, counts };
}

/** Dark-blue-to-yellow color ramp for field snapshots, t in [0, 1]. */
export function colorRamp(t: number): string {
  const clamped = Math.max(0, Math.min(1, t));
  const r = Math.round(255 * Math.min(1, Math.max(0, 2.5 * clamped - 1.0)));
  const g = Math.round(255 * Math.min(1, Math.max(0, 1.6 * clamped)));
  const b = Math.round(255 * Math.min(1, Math.max(0, 1.2 - 1.5 * clamped)));
  return `rgb(${r},${g},${b})`;
}
