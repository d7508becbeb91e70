/**
 * Backend-independent drawing model: figures build a Scene, and the SVG and
 * PNG writers render it. Everything is plain data so output is a pure
 * function of the inputs.
 */

export type Anchor = "start" | "middle" | "end";

export type Primitive =
  | { kind: "rect"; x: number; y: number; w: number; h: number; fill: string }
  | { kind: "line"; x1: number; y1: number; x2: number; y2: number;
      stroke: string; width: number; dash?: boolean }
  | { kind: "polyline"; points: Array<[number, number]>; stroke: string; width: number }
  | { kind: "circle"; cx: number; cy: number; r: number; fill: string }
  | { kind: "text"; x: number; y: number; text: string; size: number;
      fill: string; anchor: Anchor };

export interface Scene {
  width: number;
  height: number;
  background: string;
  prims: Primitive[];
}

export function linearScale(domain: [number, number], range: [number, number]) {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  const span = d1 - d0 === 0 ? 1 : d1 - d0;
  return (x: number) => r0 + ((x - d0) / span) * (r1 - r0);
}

/** Tick positions at a nice step (1/2/5 x 10^k) covering [lo, hi]. */
export function niceTicks(lo: number, hi: number, count = 5): number[] {
  if (!Number.isFinite(lo) || !Number.isFinite(hi)) return [];
  if (lo === hi) return [lo];
  const span = hi - lo;
  const raw = span / Math.max(1, count);
  const mag = Math.pow(10, Math.floor(Math.log10(raw)));
  const norm = raw / mag;
  const step = (norm >= 5 ? 10 : norm >= 2 ? 5 : norm >= 1 ? 2 : 1) * mag;
  const ticks: number[] = [];
  let t = Math.ceil(lo / step) * step;
  // guard against float drift producing duplicate first/last ticks
  for (; t <= hi + step * 1e-9; t += step) {
    ticks.push(Math.abs(t) < step * 1e-9 ? 0 : t);
  }
  return ticks;
}

export function fmtTick(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e5 || a < 1e-3) return v.toExponential(1);
  const s = v.toPrecision(4);
  return s.includes(".") ? s.replace(/\.?0+$/, "") : s;
}

export interface Frame {
  x: (v: number) => number;
  y: (v: number) => number;
  left: number;
  right: number;
  top: number;
  bottom: number;
}

export const STYLE = {
  width: 640,
  height: 420,
  margin: { left: 60, right: 16, top: 40, bottom: 48 },
  background: "#ffffff",
  axis: "#333333",
  grid: "#dddddd",
  textColor: "#222222",
  titleSize: 13,
  labelSize: 11,
  tickSize: 9,
} as const;

/**
 * Draw a titled cartesian frame with ticks and axis labels into `prims`;
 * returns the data->pixel mapping. Set `xDescending` to flip the x axis
 * (high values on the left).
 */
export function drawFrame(
  prims: Primitive[],
  opts: {
    title: string;
    xLabel: string;
    yLabel: string;
    xDomain: [number, number];
    yDomain: [number, number];
    xDescending?: boolean;
    region?: { left: number; right: number; top: number; bottom: number };
  },
): Frame {
  const m = STYLE.margin;
  const region = opts.region ?? {
    left: m.left,
    right: STYLE.width - m.right,
    top: m.top,
    bottom: STYLE.height - m.bottom,
  };
  const [xd0, xd1] = opts.xDomain;
  const xr: [number, number] = opts.xDescending
    ? [region.right, region.left]
    : [region.left, region.right];
  const x = linearScale([xd0, xd1], xr);
  const y = linearScale(opts.yDomain, [region.bottom, region.top]);

  prims.push({ kind: "text", x: region.left, y: region.top - 14,
               text: opts.title, size: STYLE.titleSize, fill: STYLE.textColor,
               anchor: "start" });

  for (const t of niceTicks(opts.xDomain[0], opts.xDomain[1])) {
    const px = x(t);
    prims.push({ kind: "line", x1: px, y1: region.top, x2: px, y2: region.bottom,
                 stroke: STYLE.grid, width: 1 });
    prims.push({ kind: "text", x: px, y: region.bottom + 14, text: fmtTick(t),
                 size: STYLE.tickSize, fill: STYLE.textColor, anchor: "middle" });
  }
  for (const t of niceTicks(opts.yDomain[0], opts.yDomain[1])) {
    const py = y(t);
    prims.push({ kind: "line", x1: region.left, y1: py, x2: region.right, y2: py,
                 stroke: STYLE.grid, width: 1 });
    prims.push({ kind: "text", x: region.left - 6, y: py + 3, text: fmtTick(t),
                 size: STYLE.tickSize, fill: STYLE.textColor, anchor: "end" });
  }

  prims.push({ kind: "line", x1: region.left, y1: region.bottom, x2: region.right,
               y2: region.bottom, stroke: STYLE.axis, width: 1 });
  prims.push({ kind: "line", x1: region.left, y1: region.top, x2: region.left,
               y2: region.bottom, stroke: STYLE.axis, width: 1 });
  prims.push({ kind: "text", x: (region.left + region.right) / 2,
               y: region.bottom + 32, text: opts.xLabel, size: STYLE.labelSize,
               fill: STYLE.textColor, anchor: "middle" });
  prims.push({ kind: "text", x: region.left, y: region.top - 2, text: opts.yLabel,
               size: STYLE.labelSize, fill: STYLE.textColor, anchor: "start" });

  return { x, y, ...region };
}

/** Split a point series into runs of finite points (NaN breaks the line). */
export function finiteRuns(points: Array<[number, number]>): Array<Array<[number, number]>> {
  const runs: Array<Array<[number, number]>> = [];
  let current: Array<[number, number]> = [];
  for (const p of points) {
    if (Number.isFinite(p[0]) && Number.isFinite(p[1])) {
      current.push(p);
    } else if (current.length > 0) {
      runs.push(current);
      current = [];
    }
  }
  if (current.length > 0) runs.push(current);
  return runs;
}
