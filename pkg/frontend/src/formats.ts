/**
 * Readers for the swda pipeline's documented file formats:
 *
 * - CSV metrics files: plain comma-separated text with one header row.
 * - SWDA field snapshots: magic "SWDA", u16 version (= 1), u32 nx, ny and
 *   field count, then row-major little-endian float64 payloads; field names
 *   live in a `<file>.names` sidecar, one per line.
 *
 * Parse failures throw FormatError with the offending row or byte offset.
 */

import * as fs from "node:fs";

export class FormatError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "FormatError";
  }
}

export interface CsvTable {
  header: string[];
  rows: string[][];
}

/** Parse a metrics CSV; requires a header row and rectangular data rows. */
export function readCsv(path: string): CsvTable {
  let text: string;
  try {
    text = fs.readFileSync(path, "utf8");
  } catch {
    throw new FormatError(`cannot read ${path}`);
  }
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  if (lines.length === 0) {
    throw new FormatError(`${path}: empty CSV (no header row)`);
  }
  const header = lines[0].split(",").map((s) => s.trim());
  const rows: string[][] = [];
  for (let i = 1; i < lines.length; i++) {
    const cells = lines[i].split(",").map((s) => s.trim());
    if (cells.length !== header.length) {
      throw new FormatError(
        `${path}: row ${i + 1} has ${cells.length} cells, expected ${header.length}`,
      );
    }
    rows.push(cells);
  }
  if (rows.length === 0) {
    throw new FormatError(`${path}: no data rows`);
  }
  return { header, rows };
}

/** Column accessor with a clear error when the header is missing a name. */
export function column(table: CsvTable, name: string, path = "csv"): string[] {
  const idx = table.header.indexOf(name);
  if (idx < 0) {
    throw new FormatError(`${path}: missing column '${name}' (have: ${table.header.join(", ")})`);
  }
  return table.rows.map((r) => r[idx]);
}

export function numericColumn(table: CsvTable, name: string, path = "csv"): number[] {
  return column(table, name, path).map((v, i) => {
    const x = Number(v);
    if (!Number.isFinite(x)) {
      throw new FormatError(`${path}: row ${i + 2}, column '${name}': not a number: '${v}'`);
    }
    return x;
  });
}

export interface Snapshot {
  nx: number;
  ny: number;
  /** field name -> row-major (ny*nx) values */
  fields: Map<string, Float64Array>;
}

const SWDA_MAGIC = "SWDA";
const SWDA_VERSION = 1;

/** Read an SWDA field snapshot and its `.names` sidecar. */
export function readSnapshot(path: string): Snapshot {
  let buf: Buffer;
  try {
    buf = fs.readFileSync(path);
  } catch {
    throw new FormatError(`cannot read ${path}`);
  }
  if (buf.length < 18) {
    throw new FormatError(`${path}: truncated header (${buf.length} bytes)`);
  }
  const magic = buf.toString("latin1", 0, 4);
  if (magic !== SWDA_MAGIC) {
    throw new FormatError(`${path}: bad magic at offset 0: '${magic}'`);
  }
  const version = buf.readUInt16LE(4);
  if (version !== SWDA_VERSION) {
    throw new FormatError(`${path}: unsupported version ${version} at offset 4`);
  }
  const nx = buf.readUInt32LE(6);
  const ny = buf.readUInt32LE(10);
  const nFields = buf.readUInt32LE(14);

  let names: string[];
  try {
    names = fs
      .readFileSync(`${path}.names`, "utf8")
      .split(/\r?\n/)
      .filter((l) => l.length > 0);
  } catch {
    throw new FormatError(`cannot read sidecar ${path}.names`);
  }
  if (names.length !== nFields) {
    throw new FormatError(
      `${path}: header says ${nFields} fields but sidecar lists ${names.length}`,
    );
  }

  const per = nx * ny * 8;
  const fields = new Map<string, Float64Array>();
  let off = 18;
  for (const name of names) {
    if (off + per > buf.length) {
      throw new FormatError(`${path}: truncated payload for field '${name}' at offset ${off}`);
    }
    const values = new Float64Array(nx * ny);
    for (let i = 0; i < nx * ny; i++) {
      values[i] = buf.readDoubleLE(off + 8 * i);
    }
    fields.set(name, values);
    off += per;
  }
  return { nx, ny, fields };
}

/** All values of fields whose name matches the pattern, concatenated. */
export function pooledValues(snap: Snapshot, pattern: RegExp): Float64Array {
  const parts: Float64Array[] = [];
  for (const [name, values] of snap.fields) {
    if (pattern.test(name)) parts.push(values);
  }
  if (parts.length === 0) {
    throw new FormatError(`no fields matching ${pattern}`);
  }
  const total = parts.reduce((n, p) => n + p.length, 0);
  const out = new Float64Array(total);
  let off = 0;
  for (const p of parts) {
    out.set(p, off);
    off += p.length;
  }
  return out;
}
