/**
 * Run-length grid codec matching the service wire format:
 * {"shape": [H, W], "rle": [value, run, value, run, ...]} in row-major order.
 */

export interface GridPayload {
  shape: number[];
  rle: number[];
}

export class Grid {
  constructor(
    readonly height: number,
    readonly width: number,
    readonly data: Uint8Array,
  ) {
    if (data.length !== height * width) {
      throw new Error(`grid data length ${data.length} != ${height}x${width}`);
    }
  }

  static empty(height: number, width: number): Grid {
    return new Grid(height, width, new Uint8Array(height * width));
  }

  get(y: number, x: number): number {
    return this.data[y * this.width + x];
  }

  set(y: number, x: number, value: number): void {
    this.data[y * this.width + x] = value;
  }

  clone(): Grid {
    return new Grid(this.height, this.width, new Uint8Array(this.data));
  }

  /** Count of nonzero pixels. */
  countOn(): number {
    let n = 0;
    for (let i = 0; i < this.data.length; i++) {
      if (this.data[i] !== 0) n++;
    }
    return n;
  }

  sameShape(other: Grid): boolean {
    return this.height === other.height && this.width === other.width;
  }
}

export function decodeGrid(payload: GridPayload): Grid {
  if (!payload || !Array.isArray(payload.shape) || payload.shape.length !== 2) {
    throw new Error("malformed grid payload: shape must be [H, W]");
  }
  const [h, w] = payload.shape;
  const runs = payload.rle;
  if (runs.length % 2 !== 0) {
    throw new Error("RLE stream must hold (value, run) pairs");
  }
  const data = new Uint8Array(h * w);
  let pos = 0;
  for (let i = 0; i < runs.length; i += 2) {
    const value = runs[i];
    const run = runs[i + 1];
    if (run <= 0) throw new Error(`RLE run must be positive, got ${run}`);
    if (pos + run > data.length) {
      throw new Error(`RLE overflows the ${h}x${w} grid`);
    }
    data.fill(value, pos, pos + run);
    pos += run;
  }
  if (pos !== data.length) {
    throw new Error(`RLE covers ${pos} pixels, grid has ${data.length}`);
  }
  return new Grid(h, w, data);
}

export function encodeGrid(grid: Grid): GridPayload {
  const rle: number[] = [];
  const n = grid.data.length;
  let i = 0;
  while (i < n) {
    const value = grid.data[i];
    let run = 1;
    while (i + run < n && grid.data[i + run] === value) run++;
    rle.push(value, run);
    i += run;
  }
  return { shape: [grid.height, grid.width], rle };
}
