/**
 * The nine plot kinds. Each renderer is a pure function of its input files
 * and options and returns the SVG text; writing to disk happens in the CLI.
 */

import {
  CsvTable,
  FormatError,
  column,
  numericColumn,
  pooledValues,
  readCsv,
  readSnapshot,
} from "./formats.js";
import { Svg, colorRamp, histogram, makeFrame } from "./svg.js";

export const PLOT_KINDS = [
  "data-histogram",
  "generated-histogram",
  "fid-curve",
  "rank-histogram",
  "spaghetti",
  "da-ensemble",
  "bias-series",
  "rmse-series",
  "field-snapshot",
] as const;

export type PlotKind = (typeof PLOT_KINDS)[number];

export interface PlotOptions {
  inputs: string[];
  /** field name for field-snapshot (default: first field in the file) */
  field?: string;
  width?: number;
  height?: number;
}

const W = 640;
const H = 420;

function requireInputs(opts: PlotOptions, n: number, kind: string): string[] {
  if (opts.inputs.length < n) {
    throw new FormatError(`${kind} needs ${n} input file(s), got ${opts.inputs.length}`);
  }
  return opts.inputs;
}

function renderHistogram(path: string, title: string): string {
  const snap = readSnapshot(path);
  const values = pooledValues(snap, /^sample_/);
  const { edges, counts } = histogram(values);
  const maxCount = Math.max(...counts);
  const f = makeFrame(W, H, [edges[0], edges[edges.length - 1]], [0, maxCount * 1.05], title, "value", "count");
  for (let i = 0; i < counts.length; i++) {
    const x0 = f.x.map(edges[i]);
    const x1 = f.x.map(edges[i + 1]);
    const y = f.y.map(counts[i]);
    f.svg.rect(x0, y, Math.max(x1 - x0 - 0.5, 0.5), f.y.map(0) - y, "steelblue", 0.9);
  }
  return f.svg.render();
}

export function dataHistogram(opts: PlotOptions): string {
  const [path] = requireInputs(opts, 1, "data-histogram");
  return renderHistogram(path, "Training sample distribution");
}

export function generatedHistogram(opts: PlotOptions): string {
  const [path] = requireInputs(opts, 1, "generated-histogram");
  return renderHistogram(path, "Generated sample distribution");
}

export function fidCurve(opts: PlotOptions): string {
  const [path] = requireInputs(opts, 1, "fid-curve");
  const table = readCsv(path);
  const rounds = numericColumn(table, "round", path);
  const scores = numericColumn(table, "frechet_score", path);
  const f = makeFrame(
    W,
    H,
    [Math.min(...rounds), Math.max(...rounds)],
    [0, Math.max(...scores) * 1.05],
    "Frechet score by training round",
    "round",
    "frechet score",
  );
  f.svg.polyline(
    rounds.map((r, i) => [f.x.map(r), f.y.map(scores[i])] as [number, number]),
    "steelblue",
    2,
  );
  for (let i = 0; i < rounds.length; i++) {
    f.svg.circle(f.x.map(rounds[i]), f.y.map(scores[i]), 3, "steelblue");
  }
  return f.svg.render();
}

/** First (variable, horizon) group of the rank histogram CSV. */
function firstRankGroup(table: CsvTable, path: string): { ranks: number[]; counts: number[] } {
  const variable = column(table, "variable", path);
  const horizon = column(table, "horizon", path);
  const rank = numericColumn(table, "rank", path);
  const count = numericColumn(table, "count", path);
  const key = `${variable[0]}|${horizon[0]}`;
  const ranks: number[] = [];
  const counts: number[] = [];
  for (let i = 0; i < rank.length; i++) {
    if (`${variable[i]}|${horizon[i]}` === key) {
      ranks.push(rank[i]);
      counts.push(count[i]);
    }
  }
  return { ranks, counts };
}

export function rankHistogram(opts: PlotOptions): string {
  const [path] = requireInputs(opts, 1, "rank-histogram");
  const { ranks, counts } = firstRankGroup(readCsv(path), path);
  const total = counts.reduce((a, b) => a + b, 0);
  if (total <= 0) {
    throw new FormatError(`${path}: rank histogram has no events`);
  }
  const freq = counts.map((c) => c / total);
  const nBins = ranks.length; // N_ens + 1 bins
  const reference = 1 / nBins;
  const yMax = Math.max(...freq, reference) * 1.15;
  const f = makeFrame(W, H, [-0.5, nBins - 0.5], [0, yMax], "Rank histogram", "rank of truth", "relative frequency");
  for (let i = 0; i < nBins; i++) {
    const x0 = f.x.map(ranks[i] - 0.45);
    const x1 = f.x.map(ranks[i] + 0.45);
    const y = f.y.map(freq[i]);
    f.svg.rect(x0, y, x1 - x0, f.y.map(0) - y, "steelblue", 0.9);
  }
  // uniform reference line at 1/(N_ens+1)
  const yRef = f.y.map(reference);
  f.svg.line(f.x.map(-0.5), yRef, f.x.map(nBins - 0.5), yRef, "red", 1.5, "6,3");
  return f.svg.render();
}

interface SeriesGroup {
  steps: number[];
  byMember: Map<string, Array<[number, number]>>;
  truth: Array<[number, number]>;
}

/** Member/truth series at the first observed location of an ensemble CSV. */
function firstLocationSeries(
  table: CsvTable,
  path: string,
  stepCol: string,
  extraKeyCols: string[],
): SeriesGroup {
  const li = column(table, "location_i", path);
  const lj = column(table, "location_j", path);
  const member = column(table, "member", path);
  const step = numericColumn(table, stepCol, path);
  const value = numericColumn(table, "value", path);
  const truth = numericColumn(table, "truth", path);
  const extras = extraKeyCols.map((c) => column(table, c, path));
  const keyOf = (i: number) =>
    [li[i], lj[i], ...extras.map((col) => col[i])].join("|");
  const key = keyOf(0);

  const byMember = new Map<string, Array<[number, number]>>();
  const truthSeries = new Map<number, number>();
  for (let i = 0; i < step.length; i++) {
    if (keyOf(i) !== key) continue;
    let series = byMember.get(member[i]);
    if (!series) {
      series = [];
      byMember.set(member[i], series);
    }
    series.push([step[i], value[i]]);
    truthSeries.set(step[i], truth[i]);
  }
  const steps = [...truthSeries.keys()].sort((a, b) => a - b);
  return {
    steps,
    byMember,
    truth: steps.map((s) => [s, truthSeries.get(s)!] as [number, number]),
  };
}

function renderEnsembleSeries(
  group: SeriesGroup,
  title: string,
  xLabel: string,
): string {
  let lo = Infinity;
  let hi = -Infinity;
  for (const series of group.byMember.values()) {
    for (const [, v] of series) {
      if (v < lo) lo = v;
      if (v > hi) hi = v;
    }
  }
  for (const [, v] of group.truth) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  const pad = (hi - lo || 1) * 0.05;
  const f = makeFrame(
    W,
    H,
    [group.steps[0], group.steps[group.steps.length - 1]],
    [lo - pad, hi + pad],
    title,
    xLabel,
    "eta",
  );
  for (const series of group.byMember.values()) {
    f.svg.polyline(
      series.map(([s, v]) => [f.x.map(s), f.y.map(v)] as [number, number]),
      "gray",
      1,
      0.5,
    );
  }
  // truth overlaid in a distinct color
  f.svg.polyline(
    group.truth.map(([s, v]) => [f.x.map(s), f.y.map(v)] as [number, number]),
    "red",
    2,
  );
  return f.svg.render();
}

export function spaghetti(opts: PlotOptions): string {
  const [path] = requireInputs(opts, 1, "spaghetti");
  const group = firstLocationSeries(readCsv(path), path, "step", ["variable"]);
  return renderEnsembleSeries(group, "Forecast ensemble spaghetti", "step");
}

export function daEnsemble(opts: PlotOptions): string {
  const [path] = requireInputs(opts, 1, "da-ensemble");
  const group = firstLocationSeries(readCsv(path), path, "time", []);
  return renderEnsembleSeries(group, "Assimilation ensemble evolution", "time");
}

const SERIES_COLORS = ["steelblue", "darkorange", "seagreen", "mediumorchid", "firebrick", "teal"];

function renderMetricSeries(path: string, metric: "bias" | "rmse", title: string): string {
  const table = readCsv(path);
  const time = numericColumn(table, "time", path);
  const li = column(table, "location_i", path);
  const lj = column(table, "location_j", path);
  const values = numericColumn(table, metric, path);

  const byLoc = new Map<string, Array<[number, number]>>();
  for (let i = 0; i < time.length; i++) {
    const key = `(${li[i]},${lj[i]})`;
    let series = byLoc.get(key);
    if (!series) {
      series = [];
      byLoc.set(key, series);
    }
    series.push([time[i], values[i]]);
  }
  let lo = Math.min(...values);
  let hi = Math.max(...values);
  if (metric === "bias") {
    lo = Math.min(lo, 0);
    hi = Math.max(hi, 0);
  } else {
    lo = 0;
  }
  const pad = (hi - lo || 1) * 0.05;
  const f = makeFrame(
    W,
    H,
    [Math.min(...time), Math.max(...time)],
    [lo - pad, hi + pad],
    title,
    "time",
    metric,
  );
  if (metric === "bias") {
    const y0 = f.y.map(0);
    f.svg.line(f.x.map(Math.min(...time)), y0, f.x.map(Math.max(...time)), y0, "black", 0.5, "3,3");
  }
  let ci = 0;
  for (const [key, series] of byLoc) {
    const color = SERIES_COLORS[ci % SERIES_COLORS.length];
    series.sort((a, b) => a[0] - b[0]);
    f.svg.polyline(
      series.map(([t, v]) => [f.x.map(t), f.y.map(v)] as [number, number]),
      color,
      1.5,
    );
    f.svg.text(W - 25, 40 + 14 * ci, key, { size: 10, anchor: "end" });
    f.svg.line(W - 95, 36 + 14 * ci, W - 80, 36 + 14 * ci, color, 2);
    ci++;
  }
  return f.svg.render();
}

export function biasSeries(opts: PlotOptions): string {
  const [path] = requireInputs(opts, 1, "bias-series");
  return renderMetricSeries(path, "bias", "Bias at observed locations");
}

export function rmseSeries(opts: PlotOptions): string {
  const [path] = requireInputs(opts, 1, "rmse-series");
  return renderMetricSeries(path, "rmse", "RMSE at observed locations");
}

export function fieldSnapshot(opts: PlotOptions): string {
  const [path] = requireInputs(opts, 1, "field-snapshot");
  const snap = readSnapshot(path);
  const name = opts.field ?? snap.fields.keys().next().value;
  if (!name || !snap.fields.has(name)) {
    throw new FormatError(
      `${path}: no field '${name ?? "(none)"}' (have: ${[...snap.fields.keys()].slice(0, 8).join(", ")}...)`,
    );
  }
  const values = snap.fields.get(name)!;
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  const span = hi - lo || 1;

  const margin = { top: 30, right: 20, bottom: 30, left: 40 };
  const size = 480;
  const svg = new Svg(size + margin.left + margin.right, size + margin.top + margin.bottom);
  const cw = size / snap.nx;
  const ch = size / snap.ny;
  for (let iy = 0; iy < snap.ny; iy++) {
    for (let ix = 0; ix < snap.nx; ix++) {
      const t = (values[iy * snap.nx + ix] - lo) / span;
      // y axis points up: row 0 at the bottom
      svg.rect(
        margin.left + ix * cw,
        margin.top + (snap.ny - 1 - iy) * ch,
        cw + 0.5,
        ch + 0.5,
        colorRamp(t),
      );
    }
  }
  svg.text((size + margin.left + margin.right) / 2, 18, `${name}  [${lo.toPrecision(4)}, ${hi.toPrecision(4)}]`, {
    size: 13,
  });
  return svg.render();
}

export const RENDERERS: Record<PlotKind, (opts: PlotOptions) => string> = {
  "data-histogram": dataHistogram,
  "generated-histogram": generatedHistogram,
  "fid-curve": fidCurve,
  "rank-histogram": rankHistogram,
  spaghetti,
  "da-ensemble": daEnsemble,
  "bias-series": biasSeries,
  "rmse-series": rmseSeries,
  "field-snapshot": fieldSnapshot,
};

export function render(kind: string, opts: PlotOptions): string {
  const renderer = RENDERERS[kind as PlotKind];
  if (!renderer) {
    throw new FormatError(`unknown plot kind '${kind}'; choose from: ${PLOT_KINDS.join(", ")}`);
  }
  return renderer(opts);
}
