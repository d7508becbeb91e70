/**
 * Scene -> PNG. A tiny software rasterizer (solid fills, Bresenham lines,
 * a 5x7 bitmap font) plus a minimal PNG writer on top of node's zlib.
 * No anti-aliasing; output is deterministic.
 */

import { deflateSync } from "node:zlib";

import type { Primitive, Scene } from "./scene.js";

// 5x7 font, five column bytes per glyph, bit 0 = top row (classic
// GLCD-style table). Unmapped characters render as a hollow box.
const GLYPHS: Record<string, number[]> = {
  " ": [0x00, 0x00, 0x00, 0x00, 0x00],
  "-": [0x08, 0x08, 0x08, 0x08, 0x08],
  "+": [0x08, 0x08, 0x3e, 0x08, 0x08],
  ".": [0x00, 0x60, 0x60, 0x00, 0x00],
  ",": [0x00, 0x50, 0x30, 0x00, 0x00],
  ":": [0x00, 0x36, 0x36, 0x00, 0x00],
  "(": [0x00, 0x1c, 0x22, 0x41, 0x00],
  ")": [0x00, 0x41, 0x22, 0x1c, 0x00],
  "=": [0x14, 0x14, 0x14, 0x14, 0x14],
  "/": [0x20, 0x10, 0x08, 0x04, 0x02],
  "[": [0x00, 0x7f, 0x41, 0x41, 0x00],
  "]": [0x00, 0x41, 0x41, 0x7f, 0x00],
  "0": [0x3e, 0x51, 0x49, 0x45, 0x3e],
  "1": [0x00, 0x42, 0x7f, 0x40, 0x00],
  "2": [0x42, 0x61, 0x51, 0x49, 0x46],
  "3": [0x21, 0x41, 0x45, 0x4b, 0x31],
  "4": [0x18, 0x14, 0x12, 0x7f, 0x10],
  "5": [0x27, 0x45, 0x45, 0x45, 0x39],
  "6": [0x3c, 0x4a, 0x49, 0x49, 0x30],
  "7": [0x01, 0x71, 0x09, 0x05, 0x03],
  "8": [0x36, 0x49, 0x49, 0x49, 0x36],
  "9": [0x06, 0x49, 0x49, 0x29, 0x1e],
  a: [0x20, 0x54, 0x54, 0x54, 0x78],
  b: [0x7f, 0x48, 0x44, 0x44, 0x38],
  c: [0x38, 0x44, 0x44, 0x44, 0x20],
  d: [0x38, 0x44, 0x44, 0x48, 0x7f],
  e: [0x38, 0x54, 0x54, 0x54, 0x18],
  f: [0x08, 0x7e, 0x09, 0x01, 0x02],
  g: [0x0c, 0x52, 0x52, 0x52, 0x3e],
  h: [0x7f, 0x08, 0x04, 0x04, 0x78],
  i: [0x00, 0x44, 0x7d, 0x40, 0x00],
  j: [0x20, 0x40, 0x44, 0x3d, 0x00],
  k: [0x7f, 0x10, 0x28, 0x44, 0x00],
  l: [0x00, 0x41, 0x7f, 0x40, 0x00],
  m: [0x7c, 0x04, 0x18, 0x04, 0x78],
  n: [0x7c, 0x08, 0x04, 0x04, 0x78],
  o: [0x38, 0x44, 0x44, 0x44, 0x38],
  p: [0x7c, 0x14, 0x14, 0x14, 0x08],
  q: [0x08, 0x14, 0x14, 0x18, 0x7c],
  r: [0x7c, 0x08, 0x04, 0x04, 0x08],
  s: [0x48, 0x54, 0x54, 0x54, 0x20],
  t: [0x04, 0x3f, 0x44, 0x40, 0x20],
  u: [0x3c, 0x40, 0x40, 0x20, 0x7c],
  v: [0x1c, 0x20, 0x40, 0x20, 0x1c],
  w: [0x3c, 0x40, 0x30, 0x40, 0x3c],
  x: [0x44, 0x28, 0x10, 0x28, 0x44],
  y: [0x0c, 0x50, 0x50, 0x50, 0x3c],
  z: [0x44, 0x64, 0x54, 0x4c, 0x44],
};
const BOX = [0x7f, 0x41, 0x41, 0x41, 0x7f];

class Raster {
  readonly w: number;
  readonly h: number;
  readonly pixels: Uint8Array; // RGB, 3 bytes per pixel

  constructor(w: number, h: number) {
    this.w = w;
    this.h = h;
    this.pixels = new Uint8Array(w * h * 3);
  }

  set(x: number, y: number, rgb: [number, number, number]): void {
    if (x < 0 || y < 0 || x >= this.w || y >= this.h) return;
    const i = (y * this.w + x) * 3;
    this.pixels[i] = rgb[0];
    this.pixels[i + 1] = rgb[1];
    this.pixels[i + 2] = rgb[2];
  }

  fillRect(x: number, y: number, w: number, h: number, rgb: [number, number, number]): void {
    for (let yy = Math.round(y); yy < Math.round(y + h); yy++) {
      for (let xx = Math.round(x); xx < Math.round(x + w); xx++) {
        this.set(xx, yy, rgb);
      }
    }
  }

  line(x1: number, y1: number, x2: number, y2: number,
       rgb: [number, number, number], width: number, dash: boolean): void {
    let x = Math.round(x1);
    let y = Math.round(y1);
    const ex = Math.round(x2);
    const ey = Math.round(y2);
    const dx = Math.abs(ex - x);
    const dy = -Math.abs(ey - y);
    const sx = x < ex ? 1 : -1;
    const sy = y < ey ? 1 : -1;
    let err = dx + dy;
    let step = 0;
    const thick = Math.max(1, Math.round(width));
    for (;;) {
      const on = !dash || step % 7 < 4;
      if (on) {
        for (let ox = 0; ox < thick; ox++) {
          for (let oy = 0; oy < thick; oy++) {
            this.set(x + ox - ((thick / 2) | 0), y + oy - ((thick / 2) | 0), rgb);
          }
        }
      }
      if (x === ex && y === ey) break;
      const e2 = 2 * err;
      if (e2 >= dy) { err += dy; x += sx; }
      if (e2 <= dx) { err += dx; y += sy; }
      step++;
    }
  }

  circle(cx: number, cy: number, r: number, rgb: [number, number, number]): void {
    const ir = Math.max(1, Math.round(r));
    for (let yy = -ir; yy <= ir; yy++) {
      for (let xx = -ir; xx <= ir; xx++) {
        if (xx * xx + yy * yy <= ir * ir) {
          this.set(Math.round(cx) + xx, Math.round(cy) + yy, rgb);
        }
      }
    }
  }

  text(x: number, y: number, s: string, size: number,
       rgb: [number, number, number], anchor: "start" | "middle" | "end"): void {
    const scale = size >= 12 ? 2 : 1;
    const adv = 6 * scale;
    const total = s.length * adv - scale;
    let px = Math.round(x);
    if (anchor === "middle") px -= (total / 2) | 0;
    if (anchor === "end") px -= total;
    const top = Math.round(y) - 7 * scale + scale; // baseline-ish alignment
    for (const ch of s) {
      const glyph = GLYPHS[ch] ?? GLYPHS[ch.toLowerCase()] ?? BOX;
      for (let col = 0; col < 5; col++) {
        for (let row = 0; row < 7; row++) {
          if ((glyph[col] >> row) & 1) {
            this.fillRect(px + col * scale, top + row * scale, scale, scale, rgb);
          }
        }
      }
      px += adv;
    }
  }
}

function hexToRgb(hex: string): [number, number, number] {
  const h = hex.replace("#", "");
  return [parseInt(h.slice(0, 2), 16), parseInt(h.slice(2, 4), 16),
          parseInt(h.slice(4, 6), 16)];
}

// -- PNG writing -------------------------------------------------------------

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let i = 0; i < 256; i++) {
    let c = i;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[i] = c >>> 0;
  }
  return table;
})();

function crc32(buf: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < buf.length; i++) {
    c = CRC_TABLE[(c ^ buf[i]) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

function chunk(type: string, data: Uint8Array): Buffer {
  const head = Buffer.alloc(8);
  head.writeUInt32BE(data.length, 0);
  head.write(type, 4, "ascii");
  const body = Buffer.concat([head.subarray(4), Buffer.from(data)]);
  const crc = Buffer.alloc(4);
  crc.writeUInt32BE(crc32(body), 0);
  return Buffer.concat([head.subarray(0, 4), body, crc]);
}

function pngEncode(raster: Raster): Buffer {
  const { w, h, pixels } = raster;
  const ihdr = Buffer.alloc(13);
  ihdr.writeUInt32BE(w, 0);
  ihdr.writeUInt32BE(h, 4);
  ihdr[8] = 8;  // bit depth
  ihdr[9] = 2;  // color type: truecolor RGB
  const scanlines = Buffer.alloc(h * (1 + w * 3));
  for (let y = 0; y < h; y++) {
    const off = y * (1 + w * 3);
    scanlines[off] = 0; // filter: none
    scanlines.set(pixels.subarray(y * w * 3, (y + 1) * w * 3), off + 1);
  }
  const idat = deflateSync(scanlines, { level: 9 });
  return Buffer.concat([
    Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]),
    chunk("IHDR", ihdr),
    chunk("IDAT", idat),
    chunk("IEND", new Uint8Array(0)),
  ]);
}

export function sceneToPng(scene: Scene): Buffer {
  const r = new Raster(scene.width, scene.height);
  r.fillRect(0, 0, scene.width, scene.height, hexToRgb(scene.background));
  for (const p of scene.prims) {
    drawPrim(r, p);
  }
  return pngEncode(r);
}

function drawPrim(r: Raster, p: Primitive): void {
  switch (p.kind) {
    case "rect":
      r.fillRect(p.x, p.y, p.w, p.h, hexToRgb(p.fill));
      break;
    case "line":
      r.line(p.x1, p.y1, p.x2, p.y2, hexToRgb(p.stroke), p.width, p.dash ?? false);
      break;
    case "polyline":
      for (let i = 1; i < p.points.length; i++) {
        r.line(p.points[i - 1][0], p.points[i - 1][1], p.points[i][0], p.points[i][1],
               hexToRgb(p.stroke), p.width, false);
      }
      break;
    case "circle":
      r.circle(p.cx, p.cy, p.r, hexToRgb(p.fill));
      break;
    case "text":
      r.text(p.x, p.y, p.text, p.size, hexToRgb(p.fill), p.anchor);
      break;
  }
}
