/** Canvas rendering and the region-clipped freehand brush (browser only). */
import { strokeSegment } from "./maskmath.js";
import { Grid } from "./rle.js";
import { Layer } from "./render.js";
import { ViewState } from "./viewstate.js";

function hexToRgb(hex: string): [number, number, number] {
  const v = Number.parseInt(hex.slice(1), 16);
  return [(v >> 16) & 0xff, (v >> 8) & 0xff, v & 0xff];
}

export function paintGrayscale(ctx: CanvasRenderingContext2D, grid: Grid): void {
  const img = ctx.createImageData(grid.width, grid.height);
  for (let i = 0; i < grid.data.length; i++) {
    const v = grid.data[i];
    img.data[4 * i] = v;
    img.data[4 * i + 1] = v;
    img.data[4 * i + 2] = v;
    img.data[4 * i + 3] = 255;
  }
  ctx.putImageData(img, 0, 0);
}

export function paintLayer(ctx: CanvasRenderingContext2D, layer: Layer): void {
  const { grid } = layer;
  const img = ctx.createImageData(grid.width, grid.height);
  const [r, g, b] = hexToRgb(layer.color);
  const scaled = layer.kind === "heatmap"; // heatmap carries 0..255 intensities
  for (let i = 0; i < grid.data.length; i++) {
    const v = grid.data[i];
    if (v === 0) continue;
    const strength = scaled ? v / 255 : 1;
    img.data[4 * i] = r;
    img.data[4 * i + 1] = g;
    img.data[4 * i + 2] = b;
    img.data[4 * i + 3] = Math.round(255 * layer.alpha * strength);
  }
  ctx.putImageData(img, 0, 0);
}

export function paintMask(ctx: CanvasRenderingContext2D, mask: Grid,
                          color: string, alpha: number): void {
  paintLayer(ctx, {
    kind: "region", label: "mask", color, grid: mask, visible: true, alpha,
  });
}

export interface BrushTarget {
  state: ViewState;
  mask: Grid;
  region: Grid;
}

/**
 * Pointer wiring for the annotation canvas. Strokes paint into target.mask,
 * clipped to target.region at stamp time, so pixels outside the active
 * expert's region are never mutated. ``target`` returns null while no
 * session is active or outside the annotation step.
 */
export function attachBrush(
  canvas: HTMLCanvasElement,
  target: () => BrushTarget | null,
  onChange: () => void,
): void {
  let drawing = false;
  let last: [number, number] | null = null;

  const gridPos = (ev: PointerEvent, mask: Grid): [number, number] => {
    const rect = canvas.getBoundingClientRect();
    const x = ((ev.clientX - rect.left) / rect.width) * mask.width;
    const y = ((ev.clientY - rect.top) / rect.height) * mask.height;
    return [x, y];
  };

  canvas.addEventListener("pointerdown", (ev) => {
    const t = target();
    if (!t || t.state.step !== 2) return;
    drawing = true;
    canvas.setPointerCapture(ev.pointerId);
    last = gridPos(ev, t.mask);
    strokeSegment(t.mask, t.region, last[0], last[1], last[0], last[1],
      t.state.brushRadius, t.state.eraser ? 0 : 1);
    onChange();
  });
  canvas.addEventListener("pointermove", (ev) => {
    const t = target();
    if (!drawing || last === null || !t) return;
    const next = gridPos(ev, t.mask);
    strokeSegment(t.mask, t.region, last[0], last[1], next[0], next[1],
      t.state.brushRadius, t.state.eraser ? 0 : 1);
    last = next;
    onChange();
  });
  const stop = () => {
    drawing = false;
    last = null;
  };
  canvas.addEventListener("pointerup", stop);
  canvas.addEventListener("pointercancel", stop);
}
