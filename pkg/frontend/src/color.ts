/** Layer color ramp: early layers light, later layers dark. */

const LIGHT: [number, number, number] = [158, 202, 225];
const DARK: [number, number, number] = [8, 48, 107];

export function layerColor(index: number, total: number): string {
  const t = total <= 1 ? 1 : index / (total - 1);
  const mix = LIGHT.map((l, i) => Math.round(l + (DARK[i] - l) * t));
  return "#" + mix.map((c) => c.toString(16).padStart(2, "0")).join("");
}

export const ACCENT = "#c7a317";
export const MARKER = "#b2182b";
