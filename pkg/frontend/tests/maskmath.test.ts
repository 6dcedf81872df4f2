import { describe, expect, it } from "vitest";

import { andMasks, masksEqual, stampBrush, strokeSegment } from "../src/maskmath.js";
import { Grid } from "../src/rle.js";

function gridOf(rows: number[][]): Grid {
  const h = rows.length;
  const w = rows[0].length;
  return new Grid(h, w, new Uint8Array(rows.flat()));
}

describe("mask operations", () => {
  it("andMasks intersects", () => {
    const a = gridOf([[1, 1], [0, 1]]);
    const b = gridOf([[1, 0], [0, 1]]);
    expect(Array.from(andMasks(a, b).data)).toEqual([1, 0, 0, 1]);
  });

  it("masksEqual compares binarized content", () => {
    expect(masksEqual(gridOf([[2, 0]]), gridOf([[1, 0]]))).toBe(true);
    expect(masksEqual(gridOf([[1, 0]]), gridOf([[0, 1]]))).toBe(false);
  });
});

describe("region-clipped brush", () => {
  it("never touches pixels outside the region", () => {
    const mask = Grid.empty(8, 8);
    const region = Grid.empty(8, 8);
    for (let x = 0; x < 8; x++) region.set(3, x, 1); // one editable row
    stampBrush(mask, region, 4, 4, 3, 1);
    for (let y = 0; y < 8; y++) {
      for (let x = 0; x < 8; x++) {
        if (y !== 3) expect(mask.get(y, x)).toBe(0);
      }
    }
    expect(mask.countOn()).toBeGreaterThan(0);
  });

  it("stamp entirely outside the region changes nothing", () => {
    const mask = Grid.empty(8, 8);
    const region = Grid.empty(8, 8);
    region.set(0, 0, 1);
    const changed = stampBrush(mask, region, 6, 6, 1.5, 1);
    expect(changed).toBe(0);
    expect(mask.countOn()).toBe(0);
  });

  it("eraser is a brush writing zero", () => {
    const mask = Grid.empty(4, 4);
    const region = gridOf([[1, 1, 1, 1], [1, 1, 1, 1], [1, 1, 1, 1], [1, 1, 1, 1]]);
    stampBrush(mask, region, 1.5, 1.5, 4, 1);
    expect(mask.countOn()).toBe(16);
    stampBrush(mask, region, 1.5, 1.5, 4, 0);
    expect(mask.countOn()).toBe(0);
  });

  it("strokeSegment leaves no gaps along a fast move", () => {
    const mask = Grid.empty(4, 32);
    const region = Grid.empty(4, 32);
    region.data.fill(1);
    strokeSegment(mask, region, 0, 1, 31, 1, 1, 1);
    for (let x = 0; x < 32; x++) expect(mask.get(1, x)).toBe(1);
  });
});
