/**
 * Telemetry CSV parsing. Columns are matched by header name, never by
 * position, so a reordered header produces an identical table.
 */

export class CsvError extends Error {}

export interface TelemetryRow {
  step: number;
  valCe: number;
  layer: number;
  expectedSteps: number;
  gateLocal: number; // NaN when the model has no memory
  gateGlobal: number;
  nBar: number;
}

export interface TelemetryTable {
  rows: TelemetryRow[];
  layers: number[]; // sorted unique layer ids
  steps: number[];  // sorted unique steps
}

export const REQUIRED_COLUMNS = [
  "step",
  "val_ce",
  "layer",
  "expected_steps",
  "gate_local_mean",
  "gate_global_mean",
  "n_bar",
] as const;

export function parseTelemetryCsv(text: string): TelemetryTable {
  const lines = text.split(/\r?\n/).filter((l) => l.trim().length > 0);
  if (lines.length === 0) {
    throw new CsvError("empty CSV: no header row");
  }
  const header = lines[0].split(",").map((h) => h.trim());
  const index = new Map<string, number>();
  header.forEach((name, i) => index.set(name, i));
  for (const col of REQUIRED_COLUMNS) {
    if (!index.has(col)) {
      throw new CsvError(`missing column: ${col}`);
    }
  }
  if (lines.length === 1) {
    throw new CsvError("empty CSV: no data rows");
  }

  const rows: TelemetryRow[] = [];
  for (let i = 1; i < lines.length; i++) {
    const parts = lines[i].split(",");
    if (parts.length < header.length) {
      throw new CsvError(`row ${i + 1}: expected ${header.length} fields, got ${parts.length}`);
    }
    const num = (col: string) => Number(parts[index.get(col)!]);
    const row: TelemetryRow = {
      step: num("step"),
      valCe: num("val_ce"),
      layer: num("layer"),
      expectedSteps: num("expected_steps"),
      gateLocal: num("gate_local_mean"),
      gateGlobal: num("gate_global_mean"),
      nBar: num("n_bar"),
    };
    if (!Number.isFinite(row.step) || !Number.isInteger(row.layer)) {
      throw new CsvError(`row ${i + 1}: unparseable step/layer`);
    }
    rows.push(row);
  }

  const layers = [...new Set(rows.map((r) => r.layer))].sort((a, b) => a - b);
  const steps = [...new Set(rows.map((r) => r.step))].sort((a, b) => a - b);
  if (layers.length < 1) {
    throw new CsvError("need at least one layer");
  }
  if (steps.length < 2) {
    throw new CsvError(`need at least two steps, got ${steps.length}`);
  }
  rows.sort((a, b) => (a.step - b.step) || (a.layer - b.layer));
  return { rows, layers, steps };
}

/** Rows for one layer in step order. */
export function seriesForLayer(table: TelemetryTable, layer: number): TelemetryRow[] {
  return table.rows.filter((r) => r.layer === layer);
}
