/** Pure mask operations for the annotation canvases. */
import { Grid } from "./rle.js";

export function andMasks(a: Grid, b: Grid): Grid {
  if (!a.sameShape(b)) throw new Error("mask shapes differ");
  const out = Grid.empty(a.height, a.width);
  for (let i = 0; i < out.data.length; i++) {
    out.data[i] = a.data[i] !== 0 && b.data[i] !== 0 ? 1 : 0;
  }
  return out;
}

export function masksEqual(a: Grid, b: Grid): boolean {
  if (!a.sameShape(b)) return false;
  for (let i = 0; i < a.data.length; i++) {
    if ((a.data[i] !== 0) !== (b.data[i] !== 0)) return false;
  }
  return true;
}

/**
 * Stamp a filled disc onto the mask, touching only pixels inside the region:
 * strokes are clipped at draw time so the local mask never leaves the
 * active expert's territory. value 0 erases. Returns changed pixel count.
 */
export function stampBrush(
  mask: Grid,
  region: Grid,
  cx: number,
  cy: number,
  radius: number,
  value: 0 | 1,
): number {
  if (!mask.sameShape(region)) throw new Error("mask/region shapes differ");
  const r = Math.max(0, radius);
  const r2 = r * r;
  let changed = 0;
  const y0 = Math.max(0, Math.floor(cy - r));
  const y1 = Math.min(mask.height - 1, Math.ceil(cy + r));
  const x0 = Math.max(0, Math.floor(cx - r));
  const x1 = Math.min(mask.width - 1, Math.ceil(cx + r));
  for (let y = y0; y <= y1; y++) {
    for (let x = x0; x <= x1; x++) {
      const dy = y - cy;
      const dx = x - cx;
      if (dy * dy + dx * dx > r2) continue;
      if (region.get(y, x) === 0) continue;
      if (mask.get(y, x) !== value) {
        mask.set(y, x, value);
        changed++;
      }
    }
  }
  return changed;
}

/** Stamp discs along a segment so fast pointer moves leave no gaps. */
export function strokeSegment(
  mask: Grid,
  region: Grid,
  x0: number,
  y0: number,
  x1: number,
  y1: number,
  radius: number,
  value: 0 | 1,
): number {
  const steps = Math.max(1, Math.ceil(Math.hypot(x1 - x0, y1 - y0)));
  let changed = 0;
  for (let s = 0; s <= steps; s++) {
    const t = s / steps;
    changed += stampBrush(mask, region, x0 + (x1 - x0) * t, y0 + (y1 - y0) * t,
      radius, value);
  }
  return changed;
}
