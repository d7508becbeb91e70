/**
 * Scene -> SVG text. Coordinates are written with fixed two-decimal
 * precision and there are no timestamps or generated ids, so re-rendering
 * the same scene yields byte-identical output.
 */

import type { Primitive, Scene } from "./scene.js";

const FONT = "Helvetica, Arial, sans-serif";

function n(v: number): string {
  return v.toFixed(2);
}

function esc(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

function prim(p: Primitive): string {
  switch (p.kind) {
    case "rect":
      return `<rect x="${n(p.x)}" y="${n(p.y)}" width="${n(p.w)}" height="${n(p.h)}" fill="${p.fill}"/>`;
    case "line": {
      const dash = p.dash ? ` stroke-dasharray="4 3"` : "";
      return `<line x1="${n(p.x1)}" y1="${n(p.y1)}" x2="${n(p.x2)}" y2="${n(p.y2)}" `
        + `stroke="${p.stroke}" stroke-width="${n(p.width)}"${dash}/>`;
    }
    case "polyline": {
      const pts = p.points.map(([x, y]) => `${n(x)},${n(y)}`).join(" ");
      return `<polyline points="${pts}" fill="none" stroke="${p.stroke}" `
        + `stroke-width="${n(p.width)}" stroke-linejoin="round"/>`;
    }
    case "circle":
      return `<circle cx="${n(p.cx)}" cy="${n(p.cy)}" r="${n(p.r)}" fill="${p.fill}"/>`;
    case "text":
      return `<text x="${n(p.x)}" y="${n(p.y)}" font-family="${FONT}" `
        + `font-size="${p.size}" fill="${p.fill}" text-anchor="${p.anchor}">${esc(p.text)}</text>`;
  }
}

export function sceneToSvg(scene: Scene): string {
  const body = scene.prims.map(prim).join("\n  ");
  return `<svg xmlns="http://www.w3.org/2000/svg" width="${scene.width}" `
    + `height="${scene.height}" viewBox="0 0 ${scene.width} ${scene.height}">\n`
    + `  <rect x="0" y="0" width="${scene.width}" height="${scene.height}" `
    + `fill="${scene.background}"/>\n  ${body}\n</svg>\n`;
}
