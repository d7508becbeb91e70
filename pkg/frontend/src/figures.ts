/**
 * The four telemetry figures: loop usage over training, final per-layer
 * loop counts, loop usage against validation cross-entropy (with the
 * detected transition marked when a sidecar is present), and gate
 * activations over training.
 */

import { readFileSync, writeFileSync, existsSync, mkdirSync } from "node:fs";
import { join } from "node:path";

import { parseTelemetryCsv, seriesForLayer, type TelemetryTable } from "./csv.js";
import { ACCENT, MARKER, layerColor } from "./color.js";
import { drawFrame, finiteRuns, STYLE, type Primitive, type Scene } from "./scene.js";
import { sceneToPng } from "./raster.js";
import { sceneToSvg } from "./svg.js";

export type ImageFormat = "svg" | "png";

export interface Transition {
  step: number;
  ce: number;
}

export interface FigureSpec {
  csvPath: string;
  outDir: string;
  format?: ImageFormat;
  /** figure names to skip (default: render all four) */
  skip?: string[];
}

export const FIGURE_NAMES = [
  "loops_vs_step",
  "loops_final_bar",
  "loops_vs_ce",
  "gates_vs_step",
] as const;

function pad(lo: number, hi: number): [number, number] {
  if (lo === hi) return [lo - 0.5, hi + 0.5];
  const p = (hi - lo) * 0.05;
  return [lo - p, hi + p];
}

function legend(prims: Primitive[], layers: number[], x: number, y: number): void {
  layers.forEach((layer, i) => {
    const ly = y + i * 13;
    prims.push({ kind: "rect", x, y: ly - 7, w: 9, h: 9,
                 fill: layerColor(i, layers.length) });
    prims.push({ kind: "text", x: x + 13, y: ly, text: `layer ${layer}`,
                 size: STYLE.tickSize, fill: STYLE.textColor, anchor: "start" });
  });
}

function newScene(): Scene {
  return { width: STYLE.width, height: STYLE.height,
           background: STYLE.background, prims: [] };
}

export function loopsVsStepScene(table: TelemetryTable): Scene {
  const scene = newScene();
  const es = table.rows.map((r) => r.expectedSteps);
  const frame = drawFrame(scene.prims, {
    title: "expected loop iterations per layer",
    xLabel: "training step",
    yLabel: "expected steps",
    xDomain: [table.steps[0], table.steps[table.steps.length - 1]],
    yDomain: pad(Math.min(...es), Math.max(...es)),
  });
  table.layers.forEach((layer, i) => {
    const pts = seriesForLayer(table, layer)
      .map((r) => [frame.x(r.step), frame.y(r.expectedSteps)] as [number, number]);
    for (const run of finiteRuns(pts)) {
      scene.prims.push({ kind: "polyline", points: run,
                         stroke: layerColor(i, table.layers.length), width: 1.5 });
    }
  });
  legend(scene.prims, table.layers, frame.right - 70, frame.top + 12);
  return scene;
}

export function loopsFinalBarScene(table: TelemetryTable): Scene {
  const scene = newScene();
  const lastStep = table.steps[table.steps.length - 1];
  const finals = table.layers.map((layer) => {
    const rows = seriesForLayer(table, layer).filter((r) => r.step === lastStep);
    return rows.length ? rows[rows.length - 1].expectedSteps : NaN;
  });
  const hi = Math.max(...finals.filter(Number.isFinite), 1);
  const frame = drawFrame(scene.prims, {
    title: `expected steps at end of training (step ${lastStep})`,
    xLabel: "layer",
    yLabel: "expected steps",
    xDomain: [-0.5, table.layers.length - 0.5],
    yDomain: [0, hi * 1.1],
  });
  const slot = (frame.right - frame.left) / table.layers.length;
  table.layers.forEach((layer, i) => {
    const v = finals[i];
    if (!Number.isFinite(v)) return;
    const cx = frame.x(i);
    const w = slot * 0.6;
    scene.prims.push({ kind: "rect", x: cx - w / 2, y: frame.y(v),
                       w, h: frame.bottom - frame.y(v),
                       fill: layerColor(i, table.layers.length) });
    scene.prims.push({ kind: "text", x: cx, y: frame.bottom + 14, text: `${layer}`,
                       size: STYLE.tickSize, fill: STYLE.textColor, anchor: "middle" });
  });
  return scene;
}

export function loopsVsCeScene(table: TelemetryTable, transition: Transition | null): Scene {
  const scene = newScene();
  const ces = table.rows.map((r) => r.valCe);
  const es = table.rows.map((r) => r.expectedSteps);
  // descending CE axis: training reads left to right as loss falls
  const frame = drawFrame(scene.prims, {
    title: "expected loop iterations vs validation cross-entropy",
    xLabel: "validation cross-entropy (decreasing)",
    yLabel: "expected steps",
    xDomain: pad(Math.min(...ces), Math.max(...ces)),
    yDomain: pad(Math.min(...es), Math.max(...es)),
    xDescending: true,
  });
  table.layers.forEach((layer, i) => {
    const pts = seriesForLayer(table, layer)
      .map((r) => [frame.x(r.valCe), frame.y(r.expectedSteps)] as [number, number]);
    for (const run of finiteRuns(pts)) {
      scene.prims.push({ kind: "polyline", points: run,
                         stroke: layerColor(i, table.layers.length), width: 1.5 });
    }
  });
  if (transition !== null) {
    const px = frame.x(transition.ce);
    scene.prims.push({ kind: "line", x1: px, y1: frame.top, x2: px, y2: frame.bottom,
                       stroke: MARKER, width: 1.5, dash: true });
    scene.prims.push({ kind: "text", x: px, y: frame.top + 10,
                       text: `transition (step ${transition.step})`,
                       size: STYLE.tickSize, fill: MARKER, anchor: "middle" });
  }
  legend(scene.prims, table.layers, frame.right - 70, frame.bottom - 14 - 13 * table.layers.length);
  return scene;
}

export function gatesVsStepScene(table: TelemetryTable): Scene {
  const scene = newScene();
  const gates = table.rows.flatMap((r) => [r.gateLocal, r.gateGlobal])
    .filter(Number.isFinite);
  const yDomain: [number, number] = gates.length
    ? pad(Math.min(...gates, 0), Math.max(...gates, 0.0001))
    : [0, 1];
  const m = STYLE.margin;
  const mid = STYLE.width / 2;
  const panels: Array<{ title: string; key: "gateLocal" | "gateGlobal";
                        region: { left: number; right: number; top: number; bottom: number } }> = [
    { title: "local memory gate", key: "gateLocal",
      region: { left: m.left, right: mid - 12, top: m.top, bottom: STYLE.height - m.bottom } },
    { title: "global memory gate", key: "gateGlobal",
      region: { left: mid + 36, right: STYLE.width - m.right, top: m.top,
                bottom: STYLE.height - m.bottom } },
  ];
  for (const panel of panels) {
    const frame = drawFrame(scene.prims, {
      title: panel.title,
      xLabel: "training step",
      yLabel: "gate mean",
      xDomain: [table.steps[0], table.steps[table.steps.length - 1]],
      yDomain,
      region: panel.region,
    });
    let drewAny = false;
    table.layers.forEach((layer, i) => {
      const pts = seriesForLayer(table, layer)
        .map((r) => [frame.x(r.step), frame.y(r[panel.key])] as [number, number]);
      for (const run of finiteRuns(pts)) {
        drewAny = true;
        scene.prims.push({ kind: "polyline", points: run,
                           stroke: layerColor(i, table.layers.length), width: 1.5 });
      }
    });
    if (!drewAny) {
      scene.prims.push({ kind: "text", x: (frame.left + frame.right) / 2,
                         y: (frame.top + frame.bottom) / 2, text: "no memory",
                         size: STYLE.labelSize, fill: "#999999", anchor: "middle" });
    }
  }
  return scene;
}

export function readTransitionSidecar(csvPath: string): Transition | null {
  const sidecar = csvPath + ".transition.json";
  if (!existsSync(sidecar)) return null;
  const raw = JSON.parse(readFileSync(sidecar, "utf-8"));
  if (typeof raw.step !== "number" || typeof raw.ce !== "number") {
    throw new Error(`${sidecar}: expected {step, ce}`);
  }
  return { step: raw.step, ce: raw.ce };
}

export function buildScenes(table: TelemetryTable,
                            transition: Transition | null): Array<{ name: string; scene: Scene }> {
  return [
    { name: "loops_vs_step", scene: loopsVsStepScene(table) },
    { name: "loops_final_bar", scene: loopsFinalBarScene(table) },
    { name: "loops_vs_ce", scene: loopsVsCeScene(table, transition) },
    { name: "gates_vs_step", scene: gatesVsStepScene(table) },
  ];
}

/** Parse the CSV (and optional sidecar), render, write. Returns the paths. */
export function renderFigures(spec: FigureSpec): string[] {
  const format: ImageFormat = spec.format ?? "svg";
  if (format !== "svg" && format !== "png") {
    throw new Error(`unsupported format: ${format}`);
  }
  const table = parseTelemetryCsv(readFileSync(spec.csvPath, "utf-8"));
  const transition = readTransitionSidecar(spec.csvPath);
  mkdirSync(spec.outDir, { recursive: true });
  const skip = new Set(spec.skip ?? []);
  const written: string[] = [];
  for (const { name, scene } of buildScenes(table, transition)) {
    if (skip.has(name)) continue;
    const path = join(spec.outDir, `${name}.${format}`);
    if (format === "svg") {
      writeFileSync(path, sceneToSvg(scene), "utf-8");
    } else {
      writeFileSync(path, sceneToPng(scene));
    }
    written.push(path);
  }
  return written;
}
