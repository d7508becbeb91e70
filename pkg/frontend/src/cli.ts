#!/usr/bin/env node
/**
 * figures --csv <path> --out <dir> [--format svg|png] [--skip <figure>]...
 *
 * Exit codes: 0 ok, 1 malformed CSV or I/O failure, 2 usage error.
 */

import { CsvError } from "./csv.js";
import { FIGURE_NAMES, renderFigures, type ImageFormat } from "./figures.js";

const USAGE =
  "usage: figures --csv <path> --out <dir> [--format svg|png] [--skip <figure>]...\n" +
  `       figures: ${FIGURE_NAMES.join(", ")}`;

class UsageError extends Error {}

function parseArgs(argv: string[]) {
  let csv: string | null = null;
  let out: string | null = null;
  let format: ImageFormat = "svg";
  let help = false;
  const skip: string[] = [];
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    const next = () => {
      if (i + 1 >= argv.length) throw new UsageError(`${arg} needs a value`);
      return argv[++i];
    };
    switch (arg) {
      case "--csv": csv = next(); break;
      case "--out": out = next(); break;
      case "--format": {
        const f = next();
        if (f !== "svg" && f !== "png") {
          throw new UsageError(`--format must be svg or png, got ${f}`);
        }
        format = f;
        break;
      }
      case "--skip": {
        const name = next();
        if (!(FIGURE_NAMES as readonly string[]).includes(name)) {
          throw new UsageError(`unknown figure ${name}`);
        }
        skip.push(name);
        break;
      }
      case "--help":
      case "-h": help = true; break;
      default:
        throw new UsageError(`unknown argument ${arg}`);
    }
  }
  if (help) return { help: true } as const;
  if (csv === null || out === null) {
    throw new UsageError("--csv and --out are required");
  }
  return { help: false, csv, out, format, skip } as const;
}

export function main(argv: string[],
                     log: (s: string) => void = console.log,
                     err: (s: string) => void = console.error): number {
  let parsed: ReturnType<typeof parseArgs>;
  try {
    parsed = parseArgs(argv);
  } catch (e) {
    err(`error: ${(e as Error).message}\n${USAGE}`);
    return 2;
  }
  if (parsed.help) {
    log(USAGE);
    return 0;
  }
  try {
    const written = renderFigures({
      csvPath: parsed.csv, outDir: parsed.out,
      format: parsed.format, skip: [...parsed.skip],
    });
    for (const path of written) {
      log(path);
    }
    return 0;
  } catch (e) {
    const msg = e instanceof CsvError ? `malformed CSV: ${e.message}` : String(e);
    err(`error: ${msg}`);
    return 1;
  }
}

const entry = process.argv[1];
if (entry !== undefined && import.meta.url.endsWith(entry.split("/").pop() as string)) {
  process.exit(main(process.argv.slice(2)));
}
