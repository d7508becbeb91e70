/** Shared fixture builders: synthetic telemetry CSV text. */

export interface FixtureOptions {
  layers?: number;
  steps?: number;
  ramp?: boolean;           // later steps loop more (monotone n_bar rise)
  gates?: boolean;          // emit gate means (vs nan for memoryless runs)
  columnOrder?: string[];   // reorder the header (values follow it)
}

const DEFAULT_ORDER = [
  "step", "val_ce", "layer", "expected_steps",
  "gate_local_mean", "gate_global_mean", "n_bar",
];

export function fixtureCsv(opts: FixtureOptions = {}): string {
  const layers = opts.layers ?? 4;
  const steps = opts.steps ?? 20;
  const order = opts.columnOrder ?? DEFAULT_ORDER;
  const lines = [order.join(",")];
  for (let s = 0; s < steps; s++) {
    const step = (s + 1) * 10;
    const valCe = 5.0 - (3.0 * s) / steps;
    const rise = opts.ramp ? (s / steps) * 1.2 : 0;
    const perLayer: number[] = [];
    for (let layer = 0; layer < layers; layer++) {
      perLayer.push(1.2 + 0.1 * layer + rise * (0.5 + layer / layers));
    }
    const nBar = perLayer.reduce((a, b) => a + b, 0) / layers;
    for (let layer = 0; layer < layers; layer++) {
      const vals: Record<string, string> = {
        step: String(step),
        val_ce: valCe.toFixed(4),
        layer: String(layer),
        expected_steps: perLayer[layer].toFixed(4),
        gate_local_mean: opts.gates === false ? "nan" : (0.05 + 0.02 * layer + 0.001 * s).toFixed(4),
        gate_global_mean: opts.gates === false ? "nan" : (0.04 + 0.01 * layer + 0.001 * s).toFixed(4),
        n_bar: nBar.toFixed(4),
      };
      lines.push(order.map((c) => vals[c]).join(","));
    }
  }
  return lines.join("\n") + "\n";
}
