#!/usr/bin/env node
/**
 * swda-plot <kind> --in <path> [<path> ...] --out <image.svg> [--field NAME]
 *
 * Renders one SVG image from swda pipeline output files.
 * Exit codes: 0 success, 2 bad arguments, 3 read/render failure.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import { parseArgs } from "node:util";
import { FormatError } from "./formats.js";
import { PLOT_KINDS, PlotOptions, render } from "./plots.js";

export const EXIT_OK = 0;
export const EXIT_ARGS = 2;
export const EXIT_RENDER = 3;

const USAGE = `usage: swda-plot <kind> --in <path> [<path> ...] --out <image.svg> [--field NAME]

kinds: ${PLOT_KINDS.join(", ")}`;

export interface ParsedCli {
  kind: string;
  opts: PlotOptions;
  outPath: string;
}

/** Parse argv (without the node/script prefix); throws FormatError on bad usage. */
export function parseCli(argv: string[]): ParsedCli {
  if (argv.length === 0) {
    throw new FormatError(`missing plot kind\n${USAGE}`);
  }
  const kind = argv[0];
  if (!(PLOT_KINDS as readonly string[]).includes(kind)) {
    throw new FormatError(`unknown plot kind '${kind}'\n${USAGE}`);
  }
  let parsed;
  try {
    parsed = parseArgs({
      args: argv.slice(1),
      options: {
        in: { type: "string", multiple: true },
        out: { type: "string" },
        field: { type: "string" },
      },
      allowPositionals: false,
    });
  } catch (err) {
    throw new FormatError(`${(err as Error).message}\n${USAGE}`);
  }
  const inputs = parsed.values.in ?? [];
  const outPath = parsed.values.out;
  if (inputs.length === 0) {
    throw new FormatError(`--in is required\n${USAGE}`);
  }
  if (!outPath) {
    throw new FormatError(`--out is required\n${USAGE}`);
  }
  return { kind, opts: { inputs, field: parsed.values.field }, outPath };
}

export function main(argv: string[]): number {
  let cli: ParsedCli;
  try {
    cli = parseCli(argv);
  } catch (err) {
    process.stderr.write(`swda-plot: ${(err as Error).message}\n`);
    return EXIT_ARGS;
  }
  try {
    const svg = render(cli.kind, cli.opts);
    fs.mkdirSync(path.dirname(path.resolve(cli.outPath)), { recursive: true });
    fs.writeFileSync(cli.outPath, svg);
  } catch (err) {
    process.stderr.write(`swda-plot: ${(err as Error).message}\n`);
    return EXIT_RENDER;
  }
  return EXIT_OK;
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  path.resolve(process.argv[1]) === new URL(import.meta.url).pathname;

if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
